//! Local surrogate models: the kernel-weighted ridge regression used by the
//! LIME and LEMON pipelines, and the common surrogate interface.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mars::MarsModel;

/// A fitted local surrogate, queried during fidelity evaluation.
pub trait Surrogate: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>>;
    /// Per-feature explanation at `x`.
    fn attribution(&self, x: ArrayView1<f64>) -> Array1<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSurrogate {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    pub lambda: f64,
}

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

/// Minimizes `Σ ŵᵢ (yᵢ - β₀ - βᵀxᵢ)² + λ‖β‖²` with the intercept unpenalized.
///
/// Weights are rescaled to `ŵ = w · N / Σw` before solving, so the fit is
/// invariant to the overall weight scale.
pub fn fit_weighted_linear(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    lambda: f64,
) -> Result<LinearSurrogate> {
    let (n, p) = x.dim();
    if n == 0 {
        return Err(Error::InvalidInput("linear fit needs at least one row".into()));
    }
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len().min(w.len()) });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear surrogate training data".into()));
    }
    let total: f64 = w.sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("weights are all zero".into()));
    }
    let w = w.mapv(|v| v * n as f64 / total);
    let wsum = n as f64;

    let x_mean = x.t().dot(&w) / wsum;
    let y_mean = y.dot(&w) / wsum;
    let xc = &x - &x_mean.view().insert_axis(Axis(0));
    let yc = &y - y_mean;

    let (mut gram, rhs) = linalg::weighted_gram(xc.view(), yc.view(), w.view());
    for j in 0..p {
        gram[[j, j]] += lambda;
    }
    let beta = linalg::cholesky_solve(&gram, &rhs)?;
    let intercept = y_mean - beta.dot(&x_mean);
    Ok(LinearSurrogate {
        intercept,
        coefficients: beta,
        lambda,
    })
}

pub fn attribution_linear(s: &LinearSurrogate, _x: ArrayView1<f64>) -> Array1<f64> {
    s.coefficients.clone()
}

impl LinearSurrogate {
    pub fn predict_one(&self, x: ArrayView1<f64>) -> f64 {
        self.intercept + self.coefficients.dot(&x)
    }
}

impl Surrogate for LinearSurrogate {
    fn name(&self) -> &str {
        "linear"
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.nrows() > 0 && x.ncols() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                found: x.ncols(),
            });
        }
        Ok(x.dot(&self.coefficients) + self.intercept)
    }

    fn attribution(&self, x: ArrayView1<f64>) -> Array1<f64> {
        attribution_linear(self, x)
    }
}

impl Surrogate for MarsModel {
    fn name(&self) -> &str {
        "mars"
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        MarsModel::predict(self, x)
    }

    fn attribution(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.gradient(x)
    }
}

/// The surrogate attached to an explanation.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateModel {
    Linear(LinearSurrogate),
    Mars(MarsModel),
}

impl SurrogateModel {
    pub fn as_dyn(&self) -> &dyn Surrogate {
        match self {
            SurrogateModel::Linear(s) => s,
            SurrogateModel::Mars(m) => m,
        }
    }
}

impl Surrogate for SurrogateModel {
    fn name(&self) -> &str {
        self.as_dyn().name()
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.as_dyn().predict(x)
    }

    fn attribution(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.as_dyn().attribution(x)
    }
}

/// Unweighted least-squares residual helper used in tests and reports.
pub fn training_rmse(s: &dyn Surrogate, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
    let pred = s.predict(x)?;
    let n = y.len().max(1) as f64;
    Ok(((&pred - &y).mapv(|r| r * r).sum() / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn recovers_line() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 * 0.1 - 1.0);
        let y = x.column(0).mapv(|v| 2.0 * v + 1.0);
        let w = Array1::ones(20);
        let s = fit_weighted_linear(x.view(), y.view(), w.view(), 0.0).unwrap();
        assert!((s.intercept - 1.0).abs() < 1e-9);
        assert!((s.coefficients[0] - 2.0).abs() < 1e-9);
        assert_eq!(s.attribution(x.row(0)).to_vec(), s.coefficients.to_vec());
    }

    #[test]
    fn single_weighted_point_intercept_only() {
        let x = Array2::zeros((3, 0));
        let y = array![1.0, 5.0, -2.0];
        let w = array![0.0, 1.0, 0.0];
        let s = fit_weighted_linear(x.view(), y.view(), w.view(), 0.0).unwrap();
        assert!((s.intercept - 5.0).abs() < 1e-12);
        assert_eq!(s.coefficients.len(), 0);
    }

    #[test]
    fn two_feature_attribution() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * (j + 3)) % 7) as f64 - 3.0);
        let y: Array1<f64> = x.outer_iter().map(|r| 3.0 * r[0] - r[1]).collect();
        let s = fit_weighted_linear(x.view(), y.view(), Array1::ones(30).view(), 0.0).unwrap();
        assert!((s.coefficients[0] - 3.0).abs() < 1e-9);
        assert!((s.coefficients[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_model_attribution() {
        let s = LinearSurrogate { intercept: 0.0, coefficients: Array1::zeros(3), lambda: 0.0 };
        assert_eq!(s.attribution(array![1.0, 2.0, 3.0].view()).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn degenerate_design_without_ridge_is_singular() {
        let x = Array2::from_shape_fn((5, 2), |(i, _)| i as f64);
        let y = Array1::zeros(5);
        let w = Array1::ones(5);
        assert!(matches!(
            fit_weighted_linear(x.view(), y.view(), w.view(), 0.0),
            Err(Error::Singular { .. })
        ));
        assert!(fit_weighted_linear(x.view(), y.view(), w.view(), 1e-3).is_ok());
    }

    #[test]
    fn rejects_bad_weights() {
        let x = Array2::zeros((2, 1));
        let y = Array1::zeros(2);
        assert!(fit_weighted_linear(x.view(), y.view(), Array1::zeros(2).view(), 0.0).is_err());
        assert!(fit_weighted_linear(x.view(), y.view(), array![1.0, -1.0].view(), 0.0).is_err());
    }
}
