//! Local-fidelity evaluation and the benchmark grid runner.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{
    fit_forest_with, fit_gnb, fit_mlp_with, predict_proba, BlackBoxModel, ExternalModel,
    ForestConfig, MlpConfig, DEFAULT_VAR_SMOOTHING,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::explain::{self, ExplainerConfig, Explanation, Method, Neighborhood};
use crate::mars::FitOverrides;
use crate::sampling::rng::{derive_path, derive_seed, stream};
use crate::sampling::{self, BallSpec, Kernel, RadialLaw};
use crate::surrogate::Surrogate;

/// Stream ordinal for evaluation samples under an explanation seed.
pub const EVAL_STREAM: u64 = 1;

const MODEL_TAG: u64 = 0x4d4f44454c;
const CELL_TAG: u64 = 0x43454c4c;
const INSTANCE_TAG: u64 = 0x494e5354;

/// Root-mean-square difference of two equal-length finite vectors.
pub fn rmse(yr: ArrayView1<f64>, ys: ArrayView1<f64>) -> Result<f64> {
    if yr.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: yr.len(), found: ys.len() });
    }
    if yr.is_empty() {
        return Err(Error::InvalidInput("rmse of empty vectors".into()));
    }
    if yr.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rmse input".into()));
    }
    let ss: f64 = yr.iter().zip(ys.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / yr.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub m_eval_samples: usize,
    pub sigma: f64,
    pub rmax_p: f64,
    pub radial_law: RadialLaw,
    pub seed: u64,
}

impl EvalSpec {
    pub fn new(m_eval_samples: usize, sigma: f64, seed: u64) -> Self {
        Self {
            m_eval_samples,
            sigma,
            rmax_p: 0.999,
            radial_law: RadialLaw::KernelMatched,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_eval_samples == 0 {
            return Err(Error::InvalidInput("m_eval_samples must be >= 1".into()));
        }
        Kernel::new(self.sigma)?;
        if !(self.rmax_p > 0.0 && self.rmax_p < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rmax_p must lie in (0, 1), got {}",
                self.rmax_p
            )));
        }
        Ok(())
    }
}

/// Labeled evaluation samples around one instance.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub points: Array2<f64>,
    /// Black-box target-class probabilities at `points`.
    pub reference: Array1<f64>,
    pub r_max: f64,
    pub target_class: usize,
}

/// Draws `m` points in the `r_max` ball around `x` from the stream
/// `derive_seed(spec.seed, EVAL_STREAM)` and labels them with the model.
pub fn draw_eval_set(
    model: &dyn BlackBoxModel,
    x: ArrayView1<f64>,
    target_class: usize,
    spec: &EvalSpec,
) -> Result<EvalSet> {
    spec.validate()?;
    let kernel = Kernel::new(spec.sigma)?;
    let r_max = sampling::compute_rmax(&kernel, spec.rmax_p, x.len())?;
    let ball = BallSpec { center: x.to_owned(), r_max, radial_law: spec.radial_law };
    let mut rng = stream(derive_seed(spec.seed, EVAL_STREAM));
    let batch = sampling::sample_nball(&ball, &kernel, spec.m_eval_samples, &mut rng)?;
    let probs = predict_proba(model, batch.points.view())?;
    if target_class >= probs.ncols() {
        return Err(Error::IndexOutOfRange { index: target_class, len: probs.ncols() });
    }
    let reference = probs.column(target_class).to_owned();
    if let Some(i) = reference.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "black-box output at evaluation sample {i}: {:?}",
            batch.points.row(i).to_vec()
        )));
    }
    Ok(EvalSet { points: batch.points, reference, r_max, target_class })
}

/// RMSE between the reference labels and raw (unclamped) surrogate output.
pub fn evaluate_surrogate(eval: &EvalSet, s: &dyn Surrogate) -> Result<f64> {
    let ys = s.predict(eval.points.view())?;
    rmse(eval.reference.view(), ys.view())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityRecord {
    pub dataset: String,
    pub model: String,
    pub method: Method,
    pub sigma: f64,
    /// How σ was specified: a number, or `default` for `0.75·√p`.
    pub sigma_label: String,
    pub instance: usize,
    pub rmse: f64,
    pub m: usize,
    pub r_max: f64,
    pub seed: u64,
    pub wall_ms: f64,
}

pub fn evaluate_fidelity(
    ds: &Dataset,
    model: &dyn BlackBoxModel,
    expl: &Explanation,
    spec: &EvalSpec,
) -> Result<FidelityRecord> {
    let start = Instant::now();
    let x = ds.instance(expl.instance)?;
    let eval = draw_eval_set(model, x, expl.target_class, spec)?;
    let score = evaluate_surrogate(&eval, &expl.surrogate)?;
    Ok(FidelityRecord {
        dataset: ds.display_name(),
        model: model.name().to_string(),
        method: expl.method,
        sigma: spec.sigma,
        sigma_label: format_number(spec.sigma),
        instance: expl.instance,
        rmse: score,
        m: spec.m_eval_samples,
        r_max: eval.r_max,
        seed: spec.seed,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Reference classifier choice for a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Gnb,
    Forest,
    Mlp,
    /// Shell command speaking the line protocol of [`ExternalModel`].
    External(String),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Gnb => "gnb".into(),
            ModelSpec::Forest => "forest".into(),
            ModelSpec::Mlp => "mlp".into(),
            ModelSpec::External(cmd) => format!("external:{cmd}"),
        }
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("external:") {
            if cmd.trim().is_empty() {
                return Err(Error::InvalidInput("external model needs a command".into()));
            }
            return Ok(ModelSpec::External(cmd.to_string()));
        }
        match s.to_ascii_lowercase().as_str() {
            "gnb" => Ok(ModelSpec::Gnb),
            "forest" | "rf" => Ok(ModelSpec::Forest),
            "mlp" => Ok(ModelSpec::Mlp),
            other => Err(Error::InvalidInput(format!(
                "unknown model {other:?} (expected gnb, forest, mlp or external:<cmd>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gnb_var_smoothing: f64,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gnb_var_smoothing: DEFAULT_VAR_SMOOTHING,
            forest: ForestConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

pub fn fit_model(
    spec: &ModelSpec,
    ds: &Dataset,
    params: &ModelParams,
    seed: u64,
) -> Result<Box<dyn BlackBoxModel>> {
    Ok(match spec {
        ModelSpec::Gnb => Box::new(fit_gnb(ds, params.gnb_var_smoothing)?),
        ModelSpec::Forest => Box::new(fit_forest_with(ds, &params.forest, seed)?),
        ModelSpec::Mlp => Box::new(fit_mlp_with(ds, &params.mlp, seed)?),
        ModelSpec::External(cmd) => {
            Box::new(ExternalModel::spawn(cmd, ds.n_features(), ds.n_classes)?)
        }
    })
}

/// A kernel width, possibly the dimension-dependent default `0.75·√p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    Value(f64),
    Default,
}

impl SigmaSpec {
    pub fn resolve(&self, p: usize) -> f64 {
        match self {
            SigmaSpec::Value(v) => *v,
            SigmaSpec::Default => 0.75 * (p as f64).sqrt(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SigmaSpec::Value(v) => format_number(*v),
            SigmaSpec::Default => "default".into(),
        }
    }
}

impl std::str::FromStr for SigmaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("default") {
            return Ok(SigmaSpec::Default);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidInput(format!("invalid sigma {s:?}")))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {s}")));
        }
        Ok(SigmaSpec::Value(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceSelection {
    All,
    Sample(usize),
}

/// Explainer settings shared by every cell of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerDefaults {
    pub n_train_samples: usize,
    pub rmax_p: f64,
    pub train_radial_law: RadialLaw,
    pub ridge_lambda: f64,
    pub mars: FitOverrides,
}

impl Default for ExplainerDefaults {
    fn default() -> Self {
        let base = ExplainerConfig::new(Method::Lime, 1.0, 0);
        Self {
            n_train_samples: base.n_train_samples,
            rmax_p: base.rmax_p,
            train_radial_law: base.train_radial_law,
            ridge_lambda: base.ridge_lambda,
            mars: FitOverrides::default(),
        }
    }
}

impl ExplainerDefaults {
    pub fn config(&self, method: Method, sigma: f64, p: usize, seed: u64) -> ExplainerConfig {
        ExplainerConfig {
            method,
            sigma,
            n_train_samples: self.n_train_samples,
            rmax_p: self.rmax_p,
            train_radial_law: self.train_radial_law,
            mars: (method == Method::Mlime).then(|| self.mars.resolve(p)),
            ridge_lambda: self.ridge_lambda,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub datasets: Vec<Dataset>,
    pub models: Vec<ModelSpec>,
    pub methods: Vec<Method>,
    pub sigmas: Vec<SigmaSpec>,
    pub instances: InstanceSelection,
    pub explainer: ExplainerDefaults,
    pub model_params: ModelParams,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty()
            || self.models.is_empty()
            || self.methods.is_empty()
            || self.sigmas.is_empty()
        {
            return Err(Error::InvalidInput(
                "grid needs at least one dataset, model, method and sigma".into(),
            ));
        }
        for ds in &self.datasets {
            for s in &self.sigmas {
                let v = s.resolve(ds.n_features());
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "sigma {} resolves to {v} on {}",
                        s.label(),
                        ds.display_name()
                    )));
                }
            }
        }
        if let InstanceSelection::Sample(0) = self.instances {
            return Err(Error::InvalidInput("instance sample count must be >= 1".into()));
        }
        Ok(())
    }
}

/// A grid cell that failed, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub dataset: String,
    pub model: String,
    pub method: Method,
    pub sigma: f64,
    pub instance: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridOutput {
    /// Successful cells in canonical grid order.
    pub records: Vec<FidelityRecord>,
    pub errors: Vec<ErrorRow>,
}

/// Rows explained for a dataset: all, or a seeded sample without
/// replacement, ascending.
pub fn select_instances(n_rows: usize, sel: InstanceSelection, seed: u64) -> Vec<usize> {
    match sel {
        InstanceSelection::All => (0..n_rows).collect(),
        InstanceSelection::Sample(k) if k >= n_rows => (0..n_rows).collect(),
        InstanceSelection::Sample(k) => {
            let mut rng = stream(seed);
            let mut idx = index::sample(&mut rng, n_rows, k).into_vec();
            idx.sort_unstable();
            idx
        }
    }
}

/// Seed of the (dataset, model, σ, instance) cell; shared by all methods.
pub fn cell_seed(master: u64, dataset: usize, model: usize, sigma: usize, instance: usize) -> u64 {
    derive_path(
        master,
        &[CELL_TAG, dataset as u64, model as u64, sigma as u64, instance as u64],
    )
}

pub fn model_seed(master: u64, dataset: usize, model: usize) -> u64 {
    derive_path(master, &[MODEL_TAG, dataset as u64, model as u64])
}

pub fn instance_seed(master: u64, dataset: usize) -> u64 {
    derive_path(master, &[INSTANCE_TAG, dataset as u64])
}

struct Unit {
    dataset: usize,
    model: usize,
    sigma: usize,
    instance: usize,
}

type Outcome = std::result::Result<FidelityRecord, ErrorRow>;

/// Runs every (dataset, model, σ, instance, method) cell.
///
/// `eval.sigma` and `eval.seed` are replaced per cell. Each model is fitted
/// once per dataset. Output order is the grid order regardless of `jobs`.
pub fn run_grid(grid: &GridSpec, eval: &EvalSpec, master_seed: u64) -> Result<GridOutput> {
    grid.validate()?;
    if eval.m_eval_samples == 0 {
        return Err(Error::InvalidInput("m_eval_samples must be >= 1".into()));
    }
    if grid.jobs == 0 {
        return Ok(run_grid_inner(grid, eval, master_seed));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| run_grid_inner(grid, eval, master_seed)))
}

fn run_grid_inner(grid: &GridSpec, eval: &EvalSpec, master_seed: u64) -> GridOutput {
    let mut out = GridOutput::default();
    for (d, ds) in grid.datasets.iter().enumerate() {
        let rows = select_instances(ds.n_rows(), grid.instances, instance_seed(master_seed, d));
        for (m, mspec) in grid.models.iter().enumerate() {
            let model = fit_model(mspec, ds, &grid.model_params, model_seed(master_seed, d, m));
            let units: Vec<Unit> = (0..grid.sigmas.len())
                .flat_map(|s| rows.iter().map(move |&i| Unit { dataset: d, model: m, sigma: s, instance: i }))
                .collect();
            let outcomes: Vec<Vec<Outcome>> = match &model {
                Ok(model) => units
                    .par_iter()
                    .map(|u| run_unit(grid, eval, master_seed, u, model.as_ref()))
                    .collect(),
                Err(e) => units
                    .iter()
                    .map(|u| {
                        grid.methods
                            .iter()
                            .map(|&method| {
                                Err(error_row(grid, u, method, format!("model fit failed: {e}")))
                            })
                            .collect()
                    })
                    .collect(),
            };
            for o in outcomes.into_iter().flatten() {
                match o {
                    Ok(r) => out.records.push(r),
                    Err(e) => out.errors.push(e),
                }
            }
        }
    }
    out
}

fn error_row(grid: &GridSpec, u: &Unit, method: Method, reason: String) -> ErrorRow {
    let ds = &grid.datasets[u.dataset];
    ErrorRow {
        dataset: ds.display_name(),
        model: grid.models[u.model].name(),
        method,
        sigma: grid.sigmas[u.sigma].resolve(ds.n_features()),
        instance: u.instance,
        reason,
    }
}

fn run_unit(
    grid: &GridSpec,
    eval: &EvalSpec,
    master: u64,
    u: &Unit,
    model: &dyn BlackBoxModel,
) -> Vec<Outcome> {
    let ds = &grid.datasets[u.dataset];
    let p = ds.n_features();
    let sigma_spec = grid.sigmas[u.sigma];
    let sigma = sigma_spec.resolve(p);
    let seed = cell_seed(master, u.dataset, u.model, u.sigma, u.instance);

    let shared_start = Instant::now();
    let x = ds.features.row(u.instance);
    let espec = EvalSpec { sigma, seed, ..eval.clone() };
    let prepared = explain::target_class(model, x)
        .and_then(|t| Ok((t, draw_eval_set(model, x, t, &espec)?)));
    let (target, eval_set) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return grid.methods.iter().map(|&m| Err(error_row(grid, u, m, e.to_string()))).collect()
        }
    };
    let shared_ms = shared_start.elapsed().as_secs_f64() * 1e3;

    // lemon and mlime draw the same n-ball neighborhood from the same seed
    type Built = std::result::Result<(Neighborhood, f64), String>;
    let build = |cfg: &ExplainerConfig| -> Built {
        let start = Instant::now();
        explain::build_neighborhood(model, x, target, cfg)
            .map(|nb| (nb, start.elapsed().as_secs_f64() * 1e3))
            .map_err(|e| e.to_string())
    };
    let mut ball: Option<Built> = None;
    let mut outcomes = Vec::with_capacity(grid.methods.len());
    for &method in &grid.methods {
        let cfg = grid.explainer.config(method, sigma, p, seed);
        let lime_nb;
        let built: &Built = if method == Method::Lime {
            lime_nb = build(&cfg);
            &lime_nb
        } else {
            ball.get_or_insert_with(|| build(&cfg))
        };
        let fit_start = Instant::now();
        let result = match built {
            Ok((nb, nb_ms)) => explain::fit_surrogate(nb, x, u.instance, target, &cfg)
                .and_then(|expl| evaluate_surrogate(&eval_set, &expl.surrogate))
                .map(|score| (score, shared_ms + nb_ms))
                .map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        outcomes.push(match result {
            Ok((score, ms)) => Ok(FidelityRecord {
                dataset: ds.display_name(),
                model: grid.models[u.model].name(),
                method,
                sigma,
                sigma_label: sigma_spec.label(),
                instance: u.instance,
                rmse: score,
                m: espec.m_eval_samples,
                r_max: eval_set.r_max,
                seed,
                wall_ms: ms + fit_start.elapsed().as_secs_f64() * 1e3,
            }),
            Err(reason) => Err(error_row(grid, u, method, reason)),
        });
    }
    outcomes
}

/// Shortest round-trip decimal form.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

pub const RECORDS_HEADER: &str = "dataset,model,method,sigma,instance,rmse,m,rmax,seed,wall_ms";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Records as CSV. Without `include_wall_time` the wall-clock column is
/// written as 0 so the file depends only on the configuration and seed.
pub fn records_csv(records: &[FidelityRecord], include_wall_time: bool) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let wall = if include_wall_time { format!("{:.3}", r.wall_ms) } else { "0".into() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.dataset),
            csv_field(&r.model),
            r.method,
            format_number(r.sigma),
            r.instance,
            format_number(r.rmse),
            r.m,
            format_number(r.r_max),
            r.seed,
            wall
        );
    }
    out
}

pub fn timings_csv(records: &[FidelityRecord]) -> String {
    let mut out = String::from("dataset,model,method,sigma,instance,wall_ms\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            csv_field(&r.dataset),
            csv_field(&r.model),
            r.method,
            format_number(r.sigma),
            r.instance,
            r.wall_ms
        );
    }
    out
}

pub fn errors_csv(errors: &[ErrorRow]) -> String {
    let mut out = String::from("dataset,model,method,sigma,instance,reason\n");
    for e in errors {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&e.dataset),
            csv_field(&e.model),
            e.method,
            format_number(e.sigma),
            e.instance,
            csv_field(&e.reason)
        );
    }
    out
}

/// Mean RMSE over the instances of one (dataset, model, σ, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMean {
    pub dataset: String,
    pub model: String,
    pub sigma: f64,
    pub sigma_label: String,
    pub method: Method,
    pub mean_rmse: f64,
    pub n_instances: usize,
}

/// Overall RMSE reduction of `method` relative to `baseline`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub method: Method,
    pub baseline: Method,
    /// Mean over cells of `1 − rmse_method / rmse_baseline`.
    pub mean_of_ratios: f64,
    /// `1 − Σ rmse_method / Σ rmse_baseline` over the same cells.
    pub ratio_of_means: f64,
    pub cells: usize,
    /// Cells whose baseline mean is below `1e-12`.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub cells: Vec<CellMean>,
    pub reductions: Vec<Reduction>,
    pub error_rows: usize,
}

pub const REDUCTION_GUARD: f64 = 1e-12;

type CellKey = (String, String, u64);

/// Per-cell means, in order of first appearance, and reductions for every
/// method against each method preceding it in `lime, lemon, mlime` order.
pub fn summarize(records: &[FidelityRecord], error_rows: usize) -> Summary {
    let mut order: Vec<(CellKey, Method)> = Vec::new();
    let mut acc: BTreeMap<(CellKey, Method), (f64, usize, String, f64)> = BTreeMap::new();
    for r in records {
        let key = ((r.dataset.clone(), r.model.clone(), r.sigma.to_bits()), r.method);
        let e = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            (0.0, 0, r.sigma_label.clone(), r.sigma)
        });
        e.0 += r.rmse;
        e.1 += 1;
    }
    let cells: Vec<CellMean> = order
        .iter()
        .map(|key| {
            let (sum, n, label, sigma) = &acc[key];
            CellMean {
                dataset: key.0 .0.clone(),
                model: key.0 .1.clone(),
                sigma: *sigma,
                sigma_label: label.clone(),
                method: key.1,
                mean_rmse: sum / *n as f64,
                n_instances: *n,
            }
        })
        .collect();

    let mut means: BTreeMap<Method, BTreeMap<CellKey, f64>> = BTreeMap::new();
    for c in &cells {
        means
            .entry(c.method)
            .or_default()
            .insert((c.dataset.clone(), c.model.clone(), c.sigma.to_bits()), c.mean_rmse);
    }
    let mut reductions = Vec::new();
    for (bi, &baseline) in Method::ALL.iter().enumerate() {
        for &method in &Method::ALL[bi + 1..] {
            if let (Some(b), Some(m)) = (means.get(&baseline), means.get(&method)) {
                reductions.push(reduction(method, baseline, m, b));
            }
        }
    }
    Summary { cells, reductions, error_rows }
}

fn reduction(
    method: Method,
    baseline: Method,
    m: &BTreeMap<CellKey, f64>,
    b: &BTreeMap<CellKey, f64>,
) -> Reduction {
    let (mut ratios, mut sum_m, mut sum_b, mut cells, mut excluded) = (0.0, 0.0, 0.0, 0, 0);
    for (key, &bv) in b {
        let Some(&mv) = m.get(key) else { continue };
        if bv < REDUCTION_GUARD {
            excluded += 1;
            continue;
        }
        ratios += 1.0 - mv / bv;
        sum_m += mv;
        sum_b += bv;
        cells += 1;
    }
    let (mean_of_ratios, ratio_of_means) = if cells == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (ratios / cells as f64, 1.0 - sum_m / sum_b)
    };
    Reduction { method, baseline, mean_of_ratios, ratio_of_means, cells, excluded }
}

impl Summary {
    pub fn reduction(&self, method: Method, baseline: Method) -> Option<&Reduction> {
        self.reductions
            .iter()
            .find(|r| r.method == method && r.baseline == baseline)
    }

    pub fn mean(&self, dataset: &str, model: &str, sigma: f64, method: Method) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| {
                c.dataset == dataset && c.model == model && c.sigma == sigma && c.method == method
            })
            .map(|c| c.mean_rmse)
    }

    /// Rows are (dataset, σ), columns (model, method); the smallest mean in
    /// each row's model group is bold.
    pub fn to_markdown(&self) -> String {
        let mut rows: Vec<(String, u64, String)> = Vec::new();
        let mut models: Vec<String> = Vec::new();
        let mut methods: Vec<Method> = Vec::new();
        for c in &self.cells {
            let row = (c.dataset.clone(), c.sigma.to_bits(), c.sigma_label.clone());
            if !rows.contains(&row) {
                rows.push(row);
            }
            if !models.contains(&c.model) {
                models.push(c.model.clone());
            }
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
        }
        methods.sort();
        let lookup: BTreeMap<(&str, u64, &str, Method), f64> = self
            .cells
            .iter()
            .map(|c| ((c.dataset.as_str(), c.sigma.to_bits(), c.model.as_str(), c.method), c.mean_rmse))
            .collect();

        let mut out = String::from("| Dataset | σ |");
        let mut rule = String::from("|---|---|");
        for model in &models {
            for m in &methods {
                let _ = write!(out, " {model} {} |", m.display());
                rule.push_str("---:|");
            }
        }
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for (dataset, bits, label) in &rows {
            let sigma = f64::from_bits(*bits);
            let sigma_text = if label == "default" {
                format!("¾√p = {sigma:.3}")
            } else {
                label.clone()
            };
            let _ = write!(out, "| {dataset} | {sigma_text} |");
            for model in &models {
                let vals: Vec<Option<f64>> = methods
                    .iter()
                    .map(|&m| lookup.get(&(dataset.as_str(), *bits, model.as_str(), m)).copied())
                    .collect();
                let best = vals.iter().flatten().copied().fold(f64::INFINITY, f64::min);
                for v in vals {
                    match v {
                        Some(v) if v == best => {
                            let _ = write!(out, " **{v:.4}** |");
                        }
                        Some(v) => {
                            let _ = write!(out, " {v:.4} |");
                        }
                        None => out.push_str(" – |"),
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
        for r in &self.reductions {
            let _ = writeln!(
                out,
                "- {} vs {}: mean reduction {:.1}% (ratio of means {:.1}%) over {} cells, {} excluded",
                r.method.display(),
                r.baseline.display(),
                100.0 * r.mean_of_ratios,
                100.0 * r.ratio_of_means,
                r.cells,
                r.excluded
            );
        }
        let _ = writeln!(out, "- error rows excluded: {}", self.error_rows);
        out
    }
}
