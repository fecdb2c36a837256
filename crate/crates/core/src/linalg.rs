//! Small dense solvers shared by the surrogate fits.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Weighted normal equations `(Bᵀ W B, Bᵀ W y)`.
pub fn weighted_gram(
    b: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let bw = &b * &w.insert_axis(ndarray::Axis(1));
    let gram = bw.t().dot(&b);
    let rhs = bw.t().dot(&y);
    (gram, rhs)
}

const PIVOT_TOL: f64 = 1e-13;

/// Solves `a x = rhs` for symmetric positive-definite `a` by Cholesky
/// factorization. Fails if a pivot falls below `1e-13` times its diagonal
/// entry, i.e. the matrix is numerically singular.
pub fn cholesky_solve(a: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > PIVOT_TOL * a[[j, j]]) || !d.is_finite() {
            return Err(Error::Singular { size: n, pivot: j });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    // forward: L z = rhs
    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    // back: Lᵀ x = z
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let rhs = a.dot(&x_true);
        let x = cholesky_solve(&a, &rhs).unwrap();
        for (u, v) in x.iter().zip(x_true.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            cholesky_solve(&a, &array![1.0, 1.0]),
            Err(Error::Singular { pivot: 1, .. })
        ));
    }

    #[test]
    fn empty_system() {
        let x = cholesky_solve(&Array2::zeros((0, 0)), &Array1::zeros(0)).unwrap();
        assert_eq!(x.len(), 0);
    }
}
