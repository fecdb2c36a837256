#![allow(dead_code)]

use mlime::blackbox::BlackBoxModel;
use mlime::dataset::{from_arrays, Dataset};
use mlime::mars::{BasisTerm, Hinge};
use mlime::sampling::rng::{stream, NormalSource};
use mlime::Result;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Two-class model with `P(class 1) = clamp(|x₀|, 0, 1)`.
pub struct AbsModel {
    pub p: usize,
}

impl BlackBoxModel for AbsModel {
    fn name(&self) -> &str {
        "abs"
    }
    fn n_features(&self) -> usize {
        self.p
    }
    fn n_classes(&self) -> usize {
        2
    }
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), 2));
        for (i, row) in x.outer_iter().enumerate() {
            let f = row[0].abs().clamp(0.0, 1.0);
            out[[i, 0]] = 1.0 - f;
            out[[i, 1]] = f;
        }
        Ok(out)
    }
}

/// Two-class logistic model `P(class 1) = sigmoid(b + wᵀx)`.
pub struct LogitModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl BlackBoxModel for LogitModel {
    fn name(&self) -> &str {
        "logit"
    }
    fn n_features(&self) -> usize {
        self.w.len()
    }
    fn n_classes(&self) -> usize {
        2
    }
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), 2));
        for (i, row) in x.outer_iter().enumerate() {
            let z = self.b + row.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>();
            let s = 1.0 / (1.0 + (-z).exp());
            out[[i, 0]] = 1.0 - s;
            out[[i, 1]] = s;
        }
        Ok(out)
    }
}

/// Gaussian blobs with centers `±sep` along every axis, one per class.
pub fn blobs(n_per_class: usize, p: usize, classes: usize, sep: f64, seed: u64) -> Dataset {
    let mut rng = stream(seed);
    let mut normal = NormalSource::new();
    let n = n_per_class * classes;
    let mut x = Array2::zeros((n, p));
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for k in 0..n_per_class {
            let i = c * n_per_class + k;
            for j in 0..p {
                let center = if (j + c) % classes == 0 { sep } else { -sep };
                x[[i, j]] = center + normal.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    from_arrays("blobs", x, &labels).unwrap()
}

/// Weighted least squares `argmin Σ wᵢ (yᵢ - bᵢᵀβ)²` via nalgebra SVD.
pub fn wls_oracle(b: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> Vec<f64> {
    let (n, k) = b.dim();
    let bw = DMatrix::from_fn(n, k, |i, j| b[[i, j]] * w[i].sqrt());
    let yw = DVector::from_fn(n, |i, _| y[i] * w[i].sqrt());
    let sol = bw.svd(true, true).solve(&yw, 1e-12).unwrap();
    sol.iter().copied().collect()
}

/// RMSE of the best unweighted affine fit of `y` on `x`.
pub fn best_line_rmse(x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let (n, p) = x.dim();
    let mut b = Array2::ones((n, p + 1));
    b.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let beta = wls_oracle(b.view(), y, Array1::ones(n).view());
    let pred = b.dot(&Array1::from(beta));
    ((&pred - &y).mapv(|r| r * r).sum() / n as f64).sqrt()
}

pub fn uniform_matrix(n: usize, p: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    use rand::Rng;
    let mut rng = stream(seed);
    Array2::from_shape_fn((n, p), |_| rng.random_range(lo..hi))
}

pub fn design(terms: &[BasisTerm], x: ArrayView2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), terms.len()), |(i, k)| terms[k].eval(x.row(i)))
}

/// Generators of ≤ 5 hinge terms with knots at observed values.
pub fn hinge_generators(x: &Array2<f64>) -> Vec<(Vec<BasisTerm>, Vec<f64>)> {
    let t = |row: usize, j: usize| x[[row, j]];
    vec![
        (vec![BasisTerm::intercept(), BasisTerm { factors: vec![Hinge::plus(0, t(3, 0))] }], vec![0.5, 2.0]),
        (
            vec![
                BasisTerm::intercept(),
                BasisTerm { factors: vec![Hinge::plus(0, t(5, 0))] },
                BasisTerm { factors: vec![Hinge::minus(1, t(9, 1))] },
                BasisTerm { factors: vec![Hinge::plus(2, t(11, 2))] },
            ],
            vec![-1.0, 1.5, -2.0, 0.7],
        ),
        (
            vec![
                BasisTerm::intercept(),
                BasisTerm { factors: vec![Hinge::minus(0, t(20, 0))] },
                BasisTerm { factors: vec![Hinge::minus(0, t(20, 0)), Hinge::plus(1, t(7, 1))] },
            ],
            vec![0.2, 1.0, 3.0],
        ),
        (
            vec![
                BasisTerm::intercept(),
                BasisTerm { factors: vec![Hinge::plus(1, t(2, 1))] },
                BasisTerm { factors: vec![Hinge::minus(1, t(2, 1))] },
                BasisTerm { factors: vec![Hinge::plus(2, t(4, 2))] },
                BasisTerm { factors: vec![Hinge::minus(2, t(4, 2))] },
                BasisTerm { factors: vec![Hinge::plus(0, t(8, 0))] },
            ],
            vec![1.0, 1.0, -0.5, 2.5, 0.3, -1.2],
        ),
    ]
}
