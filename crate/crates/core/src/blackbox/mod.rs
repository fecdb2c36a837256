//! Reference classifiers explained by the surrogates.
//!
//! Every model is queried only through [`BlackBoxModel::predict_proba`],
//! which maps a batch of standardized feature vectors to class-probability
//! rows.

mod external;
mod forest;
mod gnb;
mod mlp;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub use external::ExternalModel;
pub use forest::{fit_forest, fit_forest_with, ForestConfig, ForestModel, Tree, TreeNode};
pub use gnb::{fit_gnb, GnbModel, DEFAULT_VAR_SMOOTHING};
pub use mlp::{fit_mlp, fit_mlp_with, MlpConfig, MlpGradients, MlpModel};

pub trait BlackBoxModel: Send + Sync {
    fn name(&self) -> &str;
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    /// One probability row per input row, in input order.
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
}

/// Validated prediction: checks the batch width and the output contract.
pub fn predict_proba(model: &dyn BlackBoxModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.nrows() == 0 {
        return Ok(Array2::zeros((0, model.n_classes())));
    }
    check_batch(model.n_features(), x)?;
    let out = model.predict_proba(x)?;
    if out.nrows() != x.nrows() || out.ncols() != model.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows() * model.n_classes(),
            found: out.len(),
        });
    }
    for (i, row) in out.outer_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{} returned a non-finite probability for row {i}",
                model.name()
            )));
        }
    }
    Ok(out)
}

pub(crate) fn check_batch(p: usize, x: ArrayView2<f64>) -> Result<()> {
    if x.nrows() > 0 && x.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, found: x.ncols() });
    }
    Ok(())
}

/// In-place numerically stable softmax of each row.
pub(crate) fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_normalizes() {
        let mut z = array![[1000.0, 1000.0], [0.0, -1.0], [3.0, 3.0]];
        softmax_rows(&mut z);
        for row in z.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(z[[0, 0]], 0.5);
    }
}
