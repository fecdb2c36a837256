use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_batch, softmax_rows, BlackBoxModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_VAR_SMOOTHING: f64 = 1e-9;

/// Gaussian naive Bayes.
#[derive(Debug, Clone, PartialEq)]
pub struct GnbModel {
    pub priors: Array1<f64>,
    /// `n_classes × p`
    pub means: Array2<f64>,
    /// `n_classes × p`, each at least `var_floor`
    pub variances: Array2<f64>,
    pub var_floor: f64,
}

/// Fits per-class Gaussians. Variances are floored at
/// `epsilon · (largest per-feature variance)`.
pub fn fit_gnb(ds: &Dataset, epsilon: f64) -> Result<GnbModel> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let (n, p) = ds.features.dim();
    let c = ds.n_classes;
    let max_var = ds
        .features
        .var_axis(Axis(0), 0.0)
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let var_floor = epsilon * if max_var > 0.0 { max_var } else { 1.0 };

    let mut counts = vec![0usize; c];
    let mut means = Array2::<f64>::zeros((c, p));
    for (row, &l) in ds.features.outer_iter().zip(&ds.labels) {
        counts[l] += 1;
        let mut m = means.row_mut(l);
        m += &row;
    }
    if let Some(class) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass { class });
    }
    for (k, mut m) in means.outer_iter_mut().enumerate() {
        m /= counts[k] as f64;
    }
    let mut variances = Array2::<f64>::zeros((c, p));
    for (row, &l) in ds.features.outer_iter().zip(&ds.labels) {
        let d = &row - &means.row(l);
        let mut v = variances.row_mut(l);
        v += &(&d * &d);
    }
    for (k, mut v) in variances.outer_iter_mut().enumerate() {
        v.mapv_inplace(|s| (s / counts[k] as f64).max(var_floor));
    }
    let priors = counts.iter().map(|&k| k as f64 / n as f64).collect();
    Ok(GnbModel { priors, means, variances, var_floor })
}

impl BlackBoxModel for GnbModel {
    fn name(&self) -> &str {
        "gnb"
    }

    fn n_features(&self) -> usize {
        self.means.ncols()
    }

    fn n_classes(&self) -> usize {
        self.priors.len()
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_batch(self.n_features(), x)?;
        let c = self.n_classes();
        let log_norm: Vec<f64> = (0..c)
            .map(|k| {
                self.priors[k].ln()
                    - 0.5
                        * self
                            .variances
                            .row(k)
                            .iter()
                            .map(|v| (2.0 * std::f64::consts::PI * v).ln())
                            .sum::<f64>()
            })
            .collect();
        let mut z = Array2::<f64>::zeros((x.nrows(), c));
        for (i, row) in x.outer_iter().enumerate() {
            for k in 0..c {
                let mut s = 0.0;
                for ((xv, m), v) in row
                    .iter()
                    .zip(self.means.row(k).iter())
                    .zip(self.variances.row(k).iter())
                {
                    s += (xv - m) * (xv - m) / v;
                }
                z[[i, k]] = log_norm[k] - 0.5 * s;
            }
        }
        softmax_rows(&mut z);
        Ok(z)
    }
}
