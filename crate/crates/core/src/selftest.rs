//! Analytic oracle suite run by the `selftest` command.

use ndarray::{array, Array1, Array2};

use crate::error::Result;
use crate::fidelity::rmse;
use crate::mars::{gcv_score, BasisTerm, Hinge, MarsModel};
use crate::sampling::rng::stream;
use crate::sampling::{compute_rmax, kernel_weight, sample_nball, BallSpec, Kernel, RadialLaw};
use crate::surrogate::fit_weighted_linear;

const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag} {}: {}\n", c.name, c.detail));
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        out.push_str(&format!("{passed}/{} checks passed\n", self.checks.len()));
        out
    }
}

pub type RmaxFn = dyn Fn(&Kernel, f64, usize) -> Result<f64>;

pub fn run() -> SelftestReport {
    run_with(&compute_rmax)
}

/// Runs the suite with a substitute for the `r_max` computation.
pub fn run_with(rmax: &RmaxFn) -> SelftestReport {
    let mut checks = Vec::new();
    let mut close = |name: &'static str, got: Result<f64>, want: f64| {
        let (passed, detail) = match got {
            Ok(g) => (
                (g - want).abs() <= TOL || (g.is_infinite() && g == want),
                format!("got {g}, expected {want}"),
            ),
            Err(e) => (false, format!("error: {e}")),
        };
        checks.push(CheckResult { name, passed, detail });
    };

    close("hinge_plus_active", Ok(Hinge::plus(0, 0.5).eval(1.0)), 0.5);
    close("hinge_plus_inactive", Ok(Hinge::plus(0, 0.5).eval(0.2)), 0.0);
    close("hinge_minus_active", Ok(Hinge::minus(0, 0.5).eval(0.2)), 0.3);
    close("hinge_minus_at_knot", Ok(Hinge::minus(0, 0.5).eval(0.5)), 0.0);
    let product = BasisTerm::intercept()
        .with_factor(Hinge::plus(0, 0.0))
        .with_factor(Hinge::minus(1, 1.0));
    close("hinge_product", Ok(1.5 * product.eval(array![2.0, 0.25].view())), 2.25);
    close("gcv_hand_value", Ok(gcv_score(2.5, 10, 3.0)), 0.25 / 0.49);
    close("gcv_saturated", Ok(gcv_score(1.0, 5, 5.0)), f64::INFINITY);
    close("rmse_swap", rmse(array![1.0, 0.0].view(), array![0.0, 1.0].view()), 1.0);
    close("rmse_single", rmse(array![0.2].view(), array![0.5].view()), 0.3);
    close("kernel_weight_at_sigma", Kernel::new(2.0).map(|k| kernel_weight(&k, 2.0)), (-1.0f64).exp());
    close(
        "rmax_dim2_closed_form",
        Kernel::new(1.0).and_then(|k| rmax(&k, 0.999, 2)),
        1000f64.ln().sqrt(),
    );
    close(
        "rmax_dim2_sigma_scaling",
        Kernel::new(2.5).and_then(|k| rmax(&k, 0.9, 2)),
        2.5 * 10f64.ln().sqrt(),
    );

    let gradient =
        MarsModel::from_terms(vec![product], array![1.5], 2).gradient(array![2.0, 0.25].view());
    close("mars_gradient", Ok((gradient[0] - 1.125).abs() + (gradient[1] + 3.0).abs()), 0.0);

    let x = Array2::from_shape_fn((11, 1), |(i, _)| i as f64 / 10.0);
    let y = x.column(0).mapv(|v| 0.5 - 2.0 * v);
    close(
        "linear_recovery",
        fit_weighted_linear(x.view(), y.view(), Array1::ones(11).view(), 0.0)
            .map(|s| (s.intercept - 0.5).abs() + (s.coefficients[0] + 2.0).abs()),
        0.0,
    );

    for (name, law) in [
        ("ball_containment_uniform", RadialLaw::UniformInBall),
        ("ball_containment_kernel", RadialLaw::KernelMatched),
    ] {
        let spec = BallSpec { center: array![0.3, -1.0, 2.0], r_max: 0.7, radial_law: law };
        let worst = Kernel::new(0.5)
            .and_then(|k| sample_nball(&spec, &k, 2000, &mut stream(17)))
            .map(|b| b.distances.iter().fold(0.0f64, |a, &d| a.max(d - spec.r_max)));
        close(name, worst, 0.0);
    }

    SelftestReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes() {
        let r = run();
        assert!(r.all_passed(), "{}", r.render());
        assert!(r.checks.len() >= 10);
    }

    #[test]
    fn sigma_misuse_fails_rmax_checks() {
        let broken = |k: &Kernel, p: f64, d: usize| {
            let squared = Kernel::new(k.sigma * k.sigma)?;
            compute_rmax(&squared, p, d)
        };
        let r = run_with(&broken);
        assert!(!r.all_passed());
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert_eq!(failed, vec!["rmax_dim2_sigma_scaling"]);
    }
}
