//! Explanation pipelines: instance → neighborhood → labels → surrogate.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::blackbox::{predict_proba, BlackBoxModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fidelity::FidelityRecord;
use crate::mars::{self, FitConfig};
use crate::sampling::rng::{derive_seed, stream};
use crate::sampling::{self, BallSpec, Kernel, RadialLaw, SampleBatch};
use crate::surrogate::{fit_weighted_linear, Surrogate, SurrogateModel, DEFAULT_RIDGE_LAMBDA};

/// Stream ordinal for training perturbations under an explanation seed.
pub const TRAIN_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lime,
    Lemon,
    Mlime,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lime, Method::Lemon, Method::Mlime];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::Lemon => "lemon",
            Method::Mlime => "mlime",
        }
    }

    pub fn display(&self) -> &'static str {
        match self {
            Method::Lime => "LIME",
            Method::Lemon => "LEMON",
            Method::Mlime => "mLIME",
        }
    }

    fn samples_in_ball(&self) -> bool {
        !matches!(self, Method::Lime)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lime" => Ok(Method::Lime),
            "lemon" => Ok(Method::Lemon),
            "mlime" => Ok(Method::Mlime),
            other => Err(Error::InvalidInput(format!(
                "unknown method {other:?} (expected lime, lemon or mlime)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerConfig {
    pub method: Method,
    pub sigma: f64,
    pub n_train_samples: usize,
    pub rmax_p: f64,
    /// Radial law of the n-ball training samples (lemon, mlime).
    pub train_radial_law: RadialLaw,
    /// MARS settings for mlime; `None` uses [`FitConfig::for_surrogate`].
    pub mars: Option<FitConfig>,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl ExplainerConfig {
    pub fn new(method: Method, sigma: f64, seed: u64) -> Self {
        Self {
            method,
            sigma,
            n_train_samples: 5000,
            rmax_p: 0.999,
            train_radial_law: RadialLaw::KernelMatched,
            mars: None,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Kernel::new(self.sigma)?;
        if self.n_train_samples < 2 {
            return Err(Error::InvalidInput("n_train_samples must be >= 2".into()));
        }
        if !(self.rmax_p > 0.0 && self.rmax_p < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rmax_p must lie in (0, 1), got {}",
                self.rmax_p
            )));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::InvalidInput("ridge_lambda must be >= 0".into()));
        }
        if let Some(m) = &self.mars {
            m.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub instance: usize,
    pub method: Method,
    pub attribution: Array1<f64>,
    pub surrogate: SurrogateModel,
    pub target_class: usize,
    pub sigma: f64,
    pub r_max: f64,
    pub n_samples: usize,
    pub train_radial_law: Option<RadialLaw>,
    pub seed: u64,
    /// RMSE of the surrogate on its own (unweighted) training samples.
    pub training_rmse: f64,
}

/// Labeled perturbation samples around one instance.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub batch: SampleBatch,
    /// Black-box probability of the target class at each sample.
    pub targets: Array1<f64>,
    /// Fitting weights (kernel weights for lime, ones otherwise).
    pub fit_weights: Array1<f64>,
    pub r_max: f64,
    pub radial_law: Option<RadialLaw>,
}

/// Lowest index among the maxima.
pub fn argmax_lowest(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn target_class(model: &dyn BlackBoxModel, x: ArrayView1<f64>) -> Result<usize> {
    let probs = predict_proba(model, x.insert_axis(Axis(0)))?;
    Ok(argmax_lowest(probs.row(0)))
}

/// Draws and labels the training neighborhood for `method`.
///
/// Lime weights are the kernel weights divided by the largest one; the
/// rescaling leaves the weighted fit unchanged and avoids underflow when
/// every sample is many kernel widths away.
pub fn build_neighborhood(
    model: &dyn BlackBoxModel,
    x: ArrayView1<f64>,
    target: usize,
    cfg: &ExplainerConfig,
) -> Result<Neighborhood> {
    let p = x.len();
    let kernel = Kernel::new(cfg.sigma)?;
    let r_max = sampling::compute_rmax(&kernel, cfg.rmax_p, p)?;
    let mut rng = stream(derive_seed(cfg.seed, TRAIN_STREAM));

    let (batch, fit_weights, radial_law) = if cfg.method.samples_in_ball() {
        let spec = BallSpec {
            center: x.to_owned(),
            r_max,
            radial_law: cfg.train_radial_law,
        };
        let batch = sampling::sample_nball(&spec, &kernel, cfg.n_train_samples, &mut rng)?;
        let w = Array1::ones(batch.len());
        (batch, w, Some(cfg.train_radial_law))
    } else {
        let batch = sampling::sample_gaussian(x, cfg.n_train_samples, &mut rng, &kernel)?;
        let s2 = cfg.sigma * cfg.sigma;
        let d2_min = batch
            .distances
            .iter()
            .map(|d| d * d)
            .fold(f64::INFINITY, f64::min);
        let w = batch.distances.mapv(|d| (-(d * d - d2_min) / s2).exp());
        (batch, w, None)
    };

    let probs = predict_proba(model, batch.points.view())?;
    if target >= probs.ncols() {
        return Err(Error::IndexOutOfRange { index: target, len: probs.ncols() });
    }
    let targets = probs.column(target).to_owned();
    if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "black-box output at sample {i}: {:?}",
            batch.points.row(i).to_vec()
        )));
    }
    Ok(Neighborhood { batch, targets, fit_weights, r_max, radial_law })
}

/// Fits the method's surrogate on an existing neighborhood.
pub fn fit_surrogate(
    nb: &Neighborhood,
    x: ArrayView1<f64>,
    instance: usize,
    target: usize,
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    let pts = nb.batch.points.view();
    let surrogate = match cfg.method {
        Method::Lime | Method::Lemon => SurrogateModel::Linear(fit_weighted_linear(
            pts,
            nb.targets.view(),
            nb.fit_weights.view(),
            cfg.ridge_lambda,
        )?),
        Method::Mlime => {
            let fit_cfg = cfg
                .mars
                .clone()
                .unwrap_or_else(|| FitConfig::for_surrogate(x.len()));
            SurrogateModel::Mars(mars::fit(pts, nb.targets.view(), nb.fit_weights.view(), &fit_cfg)?)
        }
    };
    let attribution = surrogate.attribution(x);
    if attribution.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("surrogate attribution".into()));
    }
    let pred = surrogate.predict(pts)?;
    let training_rmse =
        ((&pred - &nb.targets).mapv(|r| r * r).sum() / nb.targets.len() as f64).sqrt();
    Ok(Explanation {
        instance,
        method: cfg.method,
        attribution,
        surrogate,
        target_class: target,
        sigma: cfg.sigma,
        r_max: nb.r_max,
        n_samples: nb.batch.len(),
        train_radial_law: nb.radial_law,
        seed: cfg.seed,
        training_rmse,
    })
}

/// Explains the model's prediction for row `idx` of `ds`.
pub fn explain_instance(
    ds: &Dataset,
    model: &dyn BlackBoxModel,
    idx: usize,
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    let x = ds.instance(idx)?;
    explain_point(model, x, idx, cfg)
}

/// Explains the model at an arbitrary standardized point.
pub fn explain_point(
    model: &dyn BlackBoxModel,
    x: ArrayView1<f64>,
    instance: usize,
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    cfg.validate()?;
    let target = target_class(model, x)?;
    let nb = build_neighborhood(model, x, target, cfg)?;
    fit_surrogate(&nb, x, instance, target, cfg)
}

/// Local gradient of a MARS surrogate.
pub fn attribution_mars(m: &mars::MarsModel, x: ArrayView1<f64>) -> Array1<f64> {
    mars::attribution_mars(m, x)
}

/// Human-readable explanation: attributions in original feature units,
/// the MARS term dump for mlime, and the fidelity score if available.
pub fn render_report(
    ds: &Dataset,
    model_name: &str,
    expl: &Explanation,
    fidelity: Option<&FidelityRecord>,
) -> String {
    let mut out = String::new();
    let x = ds.features.row(expl.instance);
    let raw = ds.destandardize(x);
    let _ = writeln!(out, "dataset: {}", ds.display_name());
    let _ = writeln!(out, "model: {model_name}");
    let _ = writeln!(out, "method: {}", expl.method);
    let _ = writeln!(out, "instance: {}", expl.instance);
    let _ = writeln!(out, "target class: {}", expl.target_class);
    let _ = writeln!(out, "sigma: {}", expl.sigma);
    let _ = writeln!(out, "r_max: {}", expl.r_max);
    let _ = writeln!(out, "training samples: {}", expl.n_samples);
    if let Some(law) = expl.train_radial_law {
        let _ = writeln!(out, "radial law: {}", law.as_str());
    }
    let _ = writeln!(out, "training rmse: {}", expl.training_rmse);
    if let Some(rec) = fidelity {
        let _ = writeln!(out, "fidelity rmse: {} (m = {})", rec.rmse, rec.m);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "attribution (d prob / d feature, original units; per z-unit in brackets):"
    );
    for (j, name) in ds.feature_names.iter().enumerate() {
        let a = expl.attribution[j];
        let _ = writeln!(
            out,
            "  {name} = {}: {} [{}]",
            raw[j],
            a / ds.feature_stds[j],
            a
        );
    }
    if let SurrogateModel::Mars(m) = &expl.surrogate {
        let _ = writeln!(out);
        let _ = writeln!(out, "MARS terms (z-scored features):");
        for line in m.dump(Some(&ds.feature_names)).lines() {
            let _ = writeln!(out, "  {line}");
        }
    }
    out
}
