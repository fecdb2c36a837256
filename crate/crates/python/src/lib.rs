//! Python bindings: datasets, black-box models, explanations, fidelity
//! scoring and the benchmark runner.
//!
//! Matrices cross the boundary as lists of rows (`list[list[float]]`).

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mlime::blackbox::{predict_proba, BlackBoxModel};
use mlime::dataset;
use mlime::explain::{self, ExplainerConfig, Method};
use mlime::fidelity::{self, EvalSpec, ModelParams, ModelSpec, SigmaSpec};
use mlime::surrogate::{Surrogate, SurrogateModel};
use mlime::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        Error::Protocol(_) | Error::NonConvergence { .. } | Error::TrainingDiverged { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>, width: usize) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let mut out = Array2::zeros((n, width));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(PyValueError::new_err(format!(
                "row {i} has {} values, expected {width}",
                r.len()
            )));
        }
        out.row_mut(i).assign(&ndarray::ArrayView1::from(r.as_slice()));
    }
    Ok(out)
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn sigma_value(sigma: &Bound<'_, PyAny>, p: usize) -> PyResult<(f64, String)> {
    let spec = if let Ok(v) = sigma.extract::<f64>() {
        parse::<SigmaSpec>(&v.to_string())?
    } else {
        parse::<SigmaSpec>(&sigma.extract::<String>()?)?
    };
    Ok((spec.resolve(p), spec.label()))
}

/// Standardized tabular dataset.
#[pyclass(name = "Dataset", module = "mlime", frozen)]
struct PyDataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a CSV file with a header; the label column defaults to the last.
    #[staticmethod]
    #[pyo3(signature = (path, label_column=None))]
    fn from_csv(path: PathBuf, label_column: Option<usize>) -> PyResult<Self> {
        let raw = dataset::load_csv(&path, label_column).map_err(to_py)?;
        Ok(Self { inner: dataset::standardize(&raw) })
    }

    #[staticmethod]
    fn from_arrays(name: &str, features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        let width = features.first().map_or(0, Vec::len);
        let x = matrix(features, width)?;
        Ok(Self { inner: dataset::from_arrays(name, x, &labels).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.display_name()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    /// Standardized feature vector of row `idx`.
    fn instance(&self, idx: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.instance(idx).map_err(to_py)?.to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}, rows={}, classes={})",
            self.inner.display_name(),
            self.inner.n_rows(),
            self.inner.n_classes
        )
    }
}

/// A fitted black-box classifier.
#[pyclass(name = "Model", module = "mlime", frozen)]
struct PyModel {
    inner: Box<dyn BlackBoxModel>,
    spec: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// Fits `kind` (`gnb`, `forest`, `mlp` or `external:<command>`) with
    /// default hyperparameters.
    #[staticmethod]
    #[pyo3(signature = (dataset, kind, seed=0))]
    fn fit(py: Python<'_>, dataset: &PyDataset, kind: &str, seed: u64) -> PyResult<Self> {
        let spec: ModelSpec = parse(kind)?;
        let ds = &dataset.inner;
        let inner = py
            .detach(|| fidelity::fit_model(&spec, ds, &ModelParams::default(), seed))
            .map_err(to_py)?;
        Ok(Self { inner, spec })
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    /// Class-probability rows for standardized inputs.
    fn predict_proba(&self, py: Python<'_>, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x, self.inner.n_features())?;
        let model = self.inner.as_ref();
        let p = py.detach(|| predict_proba(model, x.view())).map_err(to_py)?;
        Ok(rows(&p))
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.spec.name())
    }
}

/// A local surrogate explanation of one instance.
#[pyclass(name = "Explanation", module = "mlime", frozen)]
struct PyExplanation {
    inner: explain::Explanation,
    dataset_name: String,
}

#[pymethods]
impl PyExplanation {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn instance(&self) -> usize {
        self.inner.instance
    }

    /// Local gradient of the surrogate, per standardized feature.
    #[getter]
    fn attribution(&self) -> Vec<f64> {
        self.inner.attribution.to_vec()
    }

    #[getter]
    fn target_class(&self) -> usize {
        self.inner.target_class
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn r_max(&self) -> f64 {
        self.inner.r_max
    }

    #[getter]
    fn training_rmse(&self) -> f64 {
        self.inner.training_rmse
    }

    /// Raw surrogate output for standardized inputs.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix(x, self.inner.attribution.len())?;
        Ok(self.inner.surrogate.predict(x.view()).map_err(to_py)?.to_vec())
    }

    /// MARS basis dump for mlime explanations, `None` otherwise.
    fn terms(&self) -> Option<String> {
        match &self.inner.surrogate {
            SurrogateModel::Mars(m) => Some(m.dump(None)),
            SurrogateModel::Linear(_) => None,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Explanation({}, {}, instance={}, sigma={})",
            self.dataset_name,
            self.inner.method.display(),
            self.inner.instance,
            self.inner.sigma
        )
    }
}

/// Explains row `instance` of `dataset`. `sigma` is a number or `"default"`
/// for 0.75·√p.
#[pyfunction]
#[pyo3(signature = (dataset, model, instance, method, sigma, seed=0, n_train_samples=5000))]
#[allow(clippy::too_many_arguments)]
fn explain_instance(
    py: Python<'_>,
    dataset: &PyDataset,
    model: &PyModel,
    instance: usize,
    method: &str,
    sigma: &Bound<'_, PyAny>,
    seed: u64,
    n_train_samples: usize,
) -> PyResult<PyExplanation> {
    let method: Method = parse(method)?;
    let ds = &dataset.inner;
    let (sigma, _) = sigma_value(sigma, ds.n_features())?;
    let cfg = ExplainerConfig { n_train_samples, ..ExplainerConfig::new(method, sigma, seed) };
    let m = model.inner.as_ref();
    let inner = py
        .detach(|| explain::explain_instance(ds, m, instance, &cfg))
        .map_err(to_py)?;
    Ok(PyExplanation { inner, dataset_name: ds.display_name() })
}

/// Fidelity RMSE of an explanation on `m` fresh samples in its ball.
#[pyfunction]
#[pyo3(signature = (dataset, model, explanation, m=50_000, seed=0))]
fn fidelity_rmse(
    py: Python<'_>,
    dataset: &PyDataset,
    model: &PyModel,
    explanation: &PyExplanation,
    m: usize,
    seed: u64,
) -> PyResult<f64> {
    let spec = EvalSpec::new(m, explanation.inner.sigma, seed);
    let (ds, bb, e) = (&dataset.inner, model.inner.as_ref(), &explanation.inner);
    let record = py
        .detach(|| fidelity::evaluate_fidelity(ds, bb, e, &spec))
        .map_err(to_py)?;
    Ok(record.rmse)
}

/// Human-readable report in original feature units.
#[pyfunction]
fn render_report(dataset: &PyDataset, model: &PyModel, explanation: &PyExplanation) -> String {
    explain::render_report(&dataset.inner, &model.spec.name(), &explanation.inner, None)
}

#[pyfunction]
fn rmse(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    fidelity::rmse(ndarray::ArrayView1::from(&a), ndarray::ArrayView1::from(&b)).map_err(to_py)
}

#[pyfunction]
fn gcv_score(rss: f64, n: usize, effective_params: f64) -> f64 {
    mlime::mars::gcv_score(rss, n, effective_params)
}

/// Radius holding `p_mass` of the kernel's radial measure in `dim`
/// dimensions.
#[pyfunction]
fn compute_rmax(sigma: f64, p_mass: f64, dim: usize) -> PyResult<f64> {
    let k = mlime::sampling::Kernel::new(sigma).map_err(to_py)?;
    mlime::sampling::compute_rmax(&k, p_mass, dim).map_err(to_py)
}

/// Runs the analytic checks; returns `(all_passed, report)`.
#[pyfunction]
fn selftest() -> (bool, String) {
    let r = mlime::selftest::run();
    (r.all_passed(), r.render())
}

/// Runs a benchmark config; returns `(exit_code, console_output)`.
#[pyfunction]
#[pyo3(signature = (config, jobs=None, seed=None, out=None))]
fn run_benchmark(
    py: Python<'_>,
    config: PathBuf,
    jobs: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> PyResult<(i32, String)> {
    let mut buf = Vec::new();
    let code = py
        .detach(|| mlime::cli::cmd_benchmark(&config, jobs, seed, out.as_deref(), &mut buf))
        .map_err(to_py)?;
    Ok((code, String::from_utf8_lossy(&buf).into_owned()))
}

#[pymodule]
#[pyo3(name = "mlime")]
fn mlime_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyExplanation>()?;
    m.add_function(wrap_pyfunction!(explain_instance, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(gcv_score, m)?)?;
    m.add_function(wrap_pyfunction!(compute_rmax, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add("METHODS", Method::ALL.map(|x| x.as_str()).to_vec())?;
    Ok(())
}
