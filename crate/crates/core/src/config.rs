//! Run configuration file (TOML).
//!
//! ```toml
//! master_seed = 7
//! jobs = 0                     # 0: one worker per core
//! out_dir = "results"
//! record_wall_time = false     # true: real timings in records.csv
//!
//! [grid]
//! datasets = ["data/wine.csv", { path = "other.csv", label_column = 0 }]
//! models = ["gnb", "forest", "mlp"]   # or "external:<command>"
//! methods = ["lime", "lemon", "mlime"]
//! sigmas = [0.1, 0.3, 0.5, 1.0, 4.0, "default"]   # "default" = 0.75·√p
//! instances = 20               # or "all"
//!
//! [eval]
//! m = 50000
//! rmax_p = 0.999
//! radial_law = "kernel-matched"  # or "uniform-in-ball"
//!
//! [explainer]
//! n_train_samples = 5000
//! rmax_p = 0.999
//! train_radial_law = "kernel-matched"
//! ridge_lambda = 0.001
//!
//! [mars]                       # unset keys follow the feature count
//! max_terms = 21
//! max_degree = 2
//! gcv_penalty = 3.0
//! min_rss_improvement = 1e-8
//! knot_candidates = "auto"     # "all-observed" or { subsample = 200 }
//! span_alpha = 0.05            # knot spacing rule; 0 turns it off
//!
//! [models.gnb]
//! var_smoothing = 1e-9
//! [models.forest]
//! n_trees = 200
//! min_samples_leaf = 1
//! # max_features = 4          # default ceil(sqrt(p))
//! [models.mlp]
//! hidden = [100, 100, 100]
//! epochs = 200
//! batch_size = 32
//! learning_rate = 0.001
//! momentum = 0.9
//! ```
//!
//! Relative dataset paths are resolved against the config file's directory.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blackbox::{ForestConfig, MlpConfig, DEFAULT_VAR_SMOOTHING};
use crate::dataset::{self, Dataset};
use crate::error::{Error, Result};
use crate::explain::Method;
use crate::fidelity::{
    EvalSpec, ExplainerDefaults, GridSpec, InstanceSelection, ModelParams, ModelSpec, SigmaSpec,
};
use crate::mars::FitOverrides;
use crate::sampling::RadialLaw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub jobs: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub record_wall_time: bool,
    pub grid: GridSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub explainer: ExplainerSection,
    #[serde(default)]
    pub mars: FitOverrides,
    #[serde(default)]
    pub models: ModelsSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetEntry {
    Path(PathBuf),
    Table {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<usize>,
    },
}

impl DatasetEntry {
    pub fn path(&self) -> &Path {
        match self {
            DatasetEntry::Path(p) | DatasetEntry::Table { path: p, .. } => p,
        }
    }

    pub fn label_column(&self) -> Option<usize> {
        match self {
            DatasetEntry::Path(_) => None,
            DatasetEntry::Table { label_column, .. } => *label_column,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaEntry {
    Value(f64),
    Token(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstancesEntry {
    Count(usize),
    Token(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub datasets: Vec<DatasetEntry>,
    pub models: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub sigmas: Vec<SigmaEntry>,
    #[serde(default = "default_instances")]
    pub instances: InstancesEntry,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_instances() -> InstancesEntry {
    InstancesEntry::Count(20)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub m: usize,
    pub rmax_p: f64,
    pub radial_law: RadialLaw,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { m: 50_000, rmax_p: 0.999, radial_law: RadialLaw::KernelMatched }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainerSection {
    pub n_train_samples: usize,
    pub rmax_p: f64,
    pub train_radial_law: RadialLaw,
    pub ridge_lambda: f64,
}

impl Default for ExplainerSection {
    fn default() -> Self {
        let d = ExplainerDefaults::default();
        Self {
            n_train_samples: d.n_train_samples,
            rmax_p: d.rmax_p,
            train_radial_law: d.train_radial_law,
            ridge_lambda: d.ridge_lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsSection {
    pub gnb: GnbSection,
    pub forest: ForestSection,
    pub mlp: MlpSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnbSection {
    pub var_smoothing: f64,
}

impl Default for GnbSection {
    fn default() -> Self {
        Self { var_smoothing: DEFAULT_VAR_SMOOTHING }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSection {
    pub n_trees: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestSection {
    fn default() -> Self {
        let d = ForestConfig::default();
        Self { n_trees: d.n_trees, max_features: d.max_features, min_samples_leaf: d.min_samples_leaf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for MlpSection {
    fn default() -> Self {
        let d = MlpConfig::default();
        Self {
            hidden: d.hidden,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
        }
    }
}

impl RunConfig {
    /// Parses and validates; `base_dir` anchors relative dataset paths.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "<document>".into());
            Error::config(key, e.message().trim().to_string())
        })?;
        for entry in &mut cfg.grid.datasets {
            let p = match entry {
                DatasetEntry::Path(p) | DatasetEntry::Table { path: p, .. } => p,
            };
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.datasets.is_empty() {
            return Err(Error::config("grid.datasets", "must list at least one dataset"));
        }
        if self.grid.models.is_empty() {
            return Err(Error::config("grid.models", "must list at least one model"));
        }
        if self.grid.methods.is_empty() {
            return Err(Error::config("grid.methods", "must list at least one method"));
        }
        if self.grid.sigmas.is_empty() {
            return Err(Error::config("grid.sigmas", "must list at least one sigma"));
        }
        self.model_specs()?;
        self.sigma_specs()?;
        self.instance_selection()?;
        if self.eval.m == 0 {
            return Err(Error::config("eval.m", "must be >= 1"));
        }
        check_mass("eval.rmax_p", self.eval.rmax_p)?;
        check_mass("explainer.rmax_p", self.explainer.rmax_p)?;
        if self.explainer.n_train_samples < 2 {
            return Err(Error::config("explainer.n_train_samples", "must be >= 2"));
        }
        if !(self.explainer.ridge_lambda >= 0.0) {
            return Err(Error::config("explainer.ridge_lambda", "must be >= 0"));
        }
        self.mars
            .resolve(1)
            .validate()
            .map_err(|e| Error::config("mars", e.to_string()))?;
        if !(self.models.gnb.var_smoothing > 0.0) {
            return Err(Error::config("models.gnb.var_smoothing", "must be > 0"));
        }
        if self.models.forest.n_trees == 0 {
            return Err(Error::config("models.forest.n_trees", "must be >= 1"));
        }
        if self.models.forest.min_samples_leaf == 0 {
            return Err(Error::config("models.forest.min_samples_leaf", "must be >= 1"));
        }
        if self.models.forest.max_features == Some(0) {
            return Err(Error::config("models.forest.max_features", "must be >= 1"));
        }
        let mlp = &self.models.mlp;
        if mlp.hidden.contains(&0) {
            return Err(Error::config("models.mlp.hidden", "layer widths must be >= 1"));
        }
        if mlp.epochs == 0 || mlp.batch_size == 0 {
            return Err(Error::config("models.mlp", "epochs and batch_size must be >= 1"));
        }
        if !(mlp.learning_rate > 0.0) {
            return Err(Error::config("models.mlp.learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&mlp.momentum) {
            return Err(Error::config("models.mlp.momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        self.grid
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.parse()
                    .map_err(|e: Error| Error::config(format!("grid.models[{i}]"), e.to_string()))
            })
            .collect()
    }

    pub fn sigma_specs(&self) -> Result<Vec<SigmaSpec>> {
        self.grid
            .sigmas
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let key = format!("grid.sigmas[{i}]");
                match s {
                    SigmaEntry::Value(v) if *v > 0.0 && v.is_finite() => Ok(SigmaSpec::Value(*v)),
                    SigmaEntry::Value(v) => Err(Error::config(key, format!("must be positive, got {v}"))),
                    SigmaEntry::Token(t) if t == "default" => Ok(SigmaSpec::Default),
                    SigmaEntry::Token(t) => Err(Error::config(
                        key,
                        format!("expected a number or \"default\", got {t:?}"),
                    )),
                }
            })
            .collect()
    }

    pub fn instance_selection(&self) -> Result<InstanceSelection> {
        match &self.grid.instances {
            InstancesEntry::Count(0) => Err(Error::config("grid.instances", "must be >= 1")),
            InstancesEntry::Count(k) => Ok(InstanceSelection::Sample(*k)),
            InstancesEntry::Token(t) if t == "all" => Ok(InstanceSelection::All),
            InstancesEntry::Token(t) => Err(Error::config(
                "grid.instances",
                format!("expected a count or \"all\", got {t:?}"),
            )),
        }
    }

    pub fn load_datasets(&self) -> Result<Vec<Dataset>> {
        self.grid
            .datasets
            .iter()
            .map(|e| Ok(dataset::standardize(&dataset::load_csv(e.path(), e.label_column())?)))
            .collect()
    }

    pub fn model_params(&self) -> ModelParams {
        let m = &self.models;
        ModelParams {
            gnb_var_smoothing: m.gnb.var_smoothing,
            forest: ForestConfig {
                n_trees: m.forest.n_trees,
                max_features: m.forest.max_features,
                min_samples_leaf: m.forest.min_samples_leaf,
            },
            mlp: MlpConfig {
                hidden: m.mlp.hidden.clone(),
                epochs: m.mlp.epochs,
                batch_size: m.mlp.batch_size,
                learning_rate: m.mlp.learning_rate,
                momentum: m.mlp.momentum,
            },
        }
    }

    pub fn explainer_defaults(&self) -> ExplainerDefaults {
        ExplainerDefaults {
            n_train_samples: self.explainer.n_train_samples,
            rmax_p: self.explainer.rmax_p,
            train_radial_law: self.explainer.train_radial_law,
            ridge_lambda: self.explainer.ridge_lambda,
            mars: self.mars.clone(),
        }
    }

    pub fn grid_spec(&self, datasets: Vec<Dataset>) -> Result<GridSpec> {
        Ok(GridSpec {
            datasets,
            models: self.model_specs()?,
            methods: self.grid.methods.clone(),
            sigmas: self.sigma_specs()?,
            instances: self.instance_selection()?,
            explainer: self.explainer_defaults(),
            model_params: self.model_params(),
            jobs: self.jobs,
        })
    }

    /// Per-cell σ and seed are filled in by the grid runner.
    pub fn eval_spec(&self) -> EvalSpec {
        EvalSpec {
            m_eval_samples: self.eval.m,
            sigma: 1.0,
            rmax_p: self.eval.rmax_p,
            radial_law: self.eval.radial_law,
            seed: self.master_seed,
        }
    }

    /// The full configuration with every default written out, followed by
    /// comments giving the per-dataset values of dimension-dependent
    /// settings.
    pub fn resolved_toml(&self, datasets: &[Dataset]) -> Result<String> {
        let mut out = toml::to_string_pretty(self)
            .map_err(|e| Error::config("<resolved>", e.to_string()))?;
        let sigmas = self.sigma_specs()?;
        for ds in datasets {
            let p = ds.n_features();
            let fit = self.mars.resolve(p);
            out.push_str(&format!(
                "\n# {}: sigmas = [{}]; mars max_terms = {}, max_degree = {}, gcv_penalty = {}, knot_candidates = {:?}, span_alpha = {}\n",
                ds.display_name(),
                sigmas
                    .iter()
                    .map(|s| format!("{}", s.resolve(p)))
                    .collect::<Vec<_>>()
                    .join(", "),
                fit.max_terms,
                fit.max_degree,
                fit.gcv_penalty,
                fit.knot_candidates,
                fit.span_alpha
            ));
        }
        Ok(out)
    }
}

fn check_mass(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must lie in (0, 1), got {v}")))
    }
}
