//! Forward pass: greedy addition of mirrored hinge pairs.
//!
//! Candidate pairs are scored without refitting. For a parent term `b` and
//! feature `j`, the span of `{b·(x_j - t)₊, b·(t - x_j)₊}` together with the
//! current basis equals the span of `{b·x_j, b·(x_j - t)₊}` plus the basis,
//! since `b` is already a basis column. The `b·x_j` part does not depend on
//! the knot, and the `b·(x_j - t)₊` part is handled with running sums over
//! rows sorted by `x_j`, so all knots of one (parent, feature) pair are
//! scored in a single sweep. The accepted pair is then refit exactly with
//! weighted least squares.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{
    effective_params, gcv_score, solve_subset, weighted_rss, BasisTerm, FitConfig,
    FitDiagnostics, Hinge, KnotCandidates, MarsModel,
};
use crate::error::{Error, Result};
use crate::linalg;

/// Column dependence threshold for orthogonalization, relative to the
/// column's own squared norm.
const DEPENDENT: f64 = 1e-10;
/// Candidate hinge columns whose residual norm after projection falls below
/// this fraction are treated as already spanned.
const CANDIDATE_DEPENDENT: f64 = 1e-8;
/// RSS below this fraction of `Σ w y²` counts as an exact fit.
const EXACT_FIT: f64 = 1e-24;
const AUTO_KNOT_LIMIT: usize = 1000;

pub(crate) fn check_inputs(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> Result<()> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("MARS needs at least 2 rows, got {n}")));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: w.len() });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MARS training data".into()));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("weights are all zero".into()));
    }
    Ok(())
}

fn dot_w(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum()
}

/// Orthogonalizes `col` against `basis` (two Gram-Schmidt passes). Returns
/// the normalized remainder, or `None` if `col` is numerically spanned.
fn orthonormalize(col: &[f64], basis: &[Vec<f64>], w: &[f64]) -> Option<Vec<f64>> {
    let norm0 = dot_w(col, col, w);
    if norm0 <= 0.0 {
        return None;
    }
    let mut u = col.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot_w(&u, q, w);
            u.iter_mut().zip(q).for_each(|(ui, qi)| *ui -= c * qi);
        }
    }
    let norm = dot_w(&u, &u, w);
    if norm <= DEPENDENT * norm0 {
        return None;
    }
    let s = norm.sqrt();
    u.iter_mut().for_each(|v| *v /= s);
    Some(u)
}

/// Descending candidate knots of one feature, excluding the extremes.
fn candidate_knots(values: &[f64], rule: KnotCandidates, n: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    if sorted.len() <= 2 {
        return Vec::new();
    }
    let interior = &sorted[1..sorted.len() - 1];
    let limit = match rule {
        KnotCandidates::AllObserved => usize::MAX,
        KnotCandidates::Subsample(k) => k,
        KnotCandidates::Auto if n <= AUTO_KNOT_LIMIT => usize::MAX,
        KnotCandidates::Auto => AUTO_KNOT_LIMIT,
    };
    if interior.len() <= limit {
        return interior.to_vec();
    }
    if limit == 1 {
        return vec![interior[interior.len() / 2]];
    }
    let last = interior.len() - 1;
    let mut picked: Vec<f64> = (0..limit)
        .map(|i| interior[(i * last + (limit - 1) / 2) / (limit - 1)])
        .collect();
    picked.dedup();
    picked
}

struct Candidate {
    gain: f64,
    parent: usize,
    feature: usize,
    knot: f64,
}

struct Workspace<'a> {
    xcols: &'a [Vec<f64>],
    span_alpha: f64,
    order: &'a [Vec<usize>],
    knots: &'a [Vec<f64>],
    w: &'a [f64],
}

/// Per-step view of the current fit: the orthonormal basis stored row-major
/// (`k` entries per row), the residual orthogonal to it, and its weighted
/// sum of squares.
struct StepState<'a> {
    qrow: &'a [f64],
    k: usize,
    r: &'a [f64],
    rss: f64,
}

impl Workspace<'_> {
    /// Best knot for hinges on `feature` under `parent`; `active` lists the
    /// rows where the parent and the weight are nonzero.
    ///
    /// With `c_t = b·(x_j - t)₊`, `v = b·x_j` and `~` denoting the part
    /// orthogonal to the basis, the gain of the pair is the gain of `~v`
    /// plus the gain of `~c_t` after removing its `~v` component. Every inner
    /// product involving `c_t` is a running sum over rows with `x_j > t`.
    fn scan(
        &self,
        parent: &[f64],
        active: &[usize],
        feature: usize,
        st: &StepState,
    ) -> Option<(f64, f64)> {
        if active.len() < 2 {
            return None;
        }
        let w = self.w;
        let xj = &self.xcols[feature];
        let (min_span, end_span) = spans(self.span_alpha, self.xcols.len(), active.len());
        let (k, qrow, r) = (st.k, st.qrow, st.r);

        // knot-independent terms: g = Qᵀ W v, ‖v‖², rᵀ W v
        let mut g = vec![0.0; k];
        let (mut vv, mut u) = (0.0, 0.0);
        let mut min_active = f64::INFINITY;
        for &i in active {
            let x = xj[i];
            let ax = w[i] * parent[i] * x;
            let row = &qrow[i * k..(i + 1) * k];
            for (gc, qc) in g.iter_mut().zip(row) {
                *gc += ax * qc;
            }
            vv += ax * parent[i] * x;
            u += ax * r[i];
            min_active = min_active.min(x);
        }
        let a_v = vv - g.iter().map(|v| v * v).sum::<f64>();
        let v_free = vv > 0.0 && a_v > DEPENDENT * vv;
        let gain_v = if v_free { u * u / a_v } else { 0.0 };
        let rss_v = (st.rss - gain_v).max(0.0);

        let mut s0 = vec![0.0; k];
        let mut s1 = vec![0.0; k];
        let (mut r0, mut r1) = (0.0, 0.0);
        let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
        let mut above = 0usize;
        let mut last_above: Option<usize> = None;
        let mut ptr = 0usize;
        let order = &self.order[feature];
        let n = order.len();
        let mut best: Option<(f64, f64)> = None;

        for &t in &self.knots[feature] {
            while ptr < n && xj[order[ptr]] > t {
                let i = order[ptr];
                ptr += 1;
                let b = parent[i];
                if b == 0.0 || w[i] == 0.0 {
                    continue;
                }
                let a = w[i] * b;
                let x = xj[i];
                let ax = a * x;
                let row = &qrow[i * k..(i + 1) * k];
                for c in 0..k {
                    s0[c] += a * row[c];
                    s1[c] += ax * row[c];
                }
                r0 += a * r[i];
                r1 += ax * r[i];
                a0 += a * b;
                a1 += ax * b;
                a2 += ax * b * x;
                above += 1;
            }
            if above == 0 || min_active >= t {
                continue;
            }
            if above < end_span || active.len() - above < end_span {
                continue;
            }
            if last_above.is_some_and(|l| above - l < min_span) {
                continue;
            }
            last_above = Some(above);
            let cc = a2 - 2.0 * t * a1 + t * t * a0;
            if !(cc > 0.0) {
                continue;
            }
            let (mut proj, mut gd) = (0.0, 0.0);
            for c in 0..k {
                let d = s1[c] - t * s0[c];
                proj += d * d;
                gd += g[c] * d;
            }
            let z = r1 - t * r0;
            let (cperp, zc) = if v_free {
                let vc = (a2 - t * a1) - gd;
                (cc - proj - vc * vc / a_v, z - vc / a_v * u)
            } else {
                (cc - proj, z)
            };
            if !(cperp > CANDIDATE_DEPENDENT * cc) {
                continue;
            }
            let gain_c = zc * zc / cperp;
            if gain_c > rss_v * (1.0 + 1e-9) + 1e-300 {
                // cancellation noise; a true projection cannot exceed the residual
                continue;
            }
            let total = gain_v + gain_c;
            if best.is_none_or(|(g, _)| total > g) {
                best = Some((total, t));
            }
        }
        best
    }
}

/// Friedman's knot spacing `(minspan, endspan)` in active rows for `p`
/// features and `n_active` rows under the parent; `(1, 1)` when
/// `alpha == 0`.
pub(crate) fn spans(alpha: f64, p: usize, n_active: usize) -> (usize, usize) {
    if alpha <= 0.0 || n_active == 0 {
        return (1, 1);
    }
    let p = p as f64;
    let end = (3.0 - (alpha / p).log2()).round().max(1.0);
    let min = (-(-(1.0 - alpha).ln() / (p * n_active as f64)).log2() / 2.5).round().max(1.0);
    (min as usize, end as usize)
}

struct Refit {
    coefficients: Array1<f64>,
    rss: f64,
}

fn refit(
    cols: &[Vec<f64>],
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> Result<Refit> {
    let n = y.len();
    let mut b = Array2::zeros((n, cols.len()));
    for (k, c) in cols.iter().enumerate() {
        b.column_mut(k).assign(&ArrayView1::from(c.as_slice()));
    }
    let (gram, rhs) = linalg::weighted_gram(b.view(), y, w);
    let all: Vec<usize> = (0..cols.len()).collect();
    let coefficients = solve_subset(&gram, &rhs, &all)?;
    let rss = weighted_rss(&b, &all, &coefficients, y, w);
    Ok(Refit { coefficients, rss })
}

pub fn fit_forward(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    cfg: &FitConfig,
) -> Result<MarsModel> {
    cfg.validate()?;
    check_inputs(x, y, w)?;
    let (n, p) = x.dim();

    let wv: Vec<f64> = w.to_vec();
    let yv: Vec<f64> = y.to_vec();
    let xcols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j).to_vec()).collect();
    let order: Vec<Vec<usize>> = xcols
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let knots: Vec<Vec<f64>> = xcols
        .iter()
        .map(|col| candidate_knots(col, cfg.knot_candidates, n))
        .collect();
    let ws = Workspace { xcols: &xcols, span_alpha: cfg.span_alpha, order: &order, knots: &knots, w: &wv };

    let mut terms = vec![BasisTerm::intercept()];
    let mut cols = vec![vec![1.0; n]];
    let mut q: Vec<Vec<f64>> = orthonormalize(&cols[0], &[], &wv).into_iter().collect();

    let mut fit = refit(&cols, y, w)?;
    let scale = dot_w(&yv, &yv, &wv);
    let mut forward_rss = vec![fit.rss];

    while (terms.len() - 1) / 2 < cfg.max_terms {
        if fit.rss <= EXACT_FIT * scale {
            break;
        }
        let mut resid = yv.clone();
        for qc in &q {
            let c = dot_w(&resid, qc, &wv);
            resid.iter_mut().zip(qc).for_each(|(r, qi)| *r -= c * qi);
        }
        let k = q.len();
        let mut qrow = vec![0.0; n * k];
        for (c, col) in q.iter().enumerate() {
            for i in 0..n {
                qrow[i * k + c] = col[i];
            }
        }
        let st = StepState { qrow: &qrow, k, r: &resid, rss: dot_w(&resid, &resid, &wv) };

        let mut best: Option<Candidate> = None;
        for (m, term) in terms.iter().enumerate() {
            if term.degree() >= cfg.max_degree {
                continue;
            }
            let active: Vec<usize> =
                (0..n).filter(|&i| cols[m][i] != 0.0 && wv[i] > 0.0).collect();
            for j in 0..p {
                if term.uses_feature(j) {
                    continue;
                }
                if let Some((gain, t)) = ws.scan(&cols[m], &active, j, &st) {
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(Candidate { gain, parent: m, feature: j, knot: t });
                    }
                }
            }
        }
        let Some(cand) = best else { break };

        let parent = &cols[cand.parent];
        let xj = &xcols[cand.feature];
        let plus: Vec<f64> = parent
            .iter()
            .zip(xj)
            .map(|(b, x)| b * (x - cand.knot).max(0.0))
            .collect();
        let minus: Vec<f64> = parent
            .iter()
            .zip(xj)
            .map(|(b, x)| b * (cand.knot - x).max(0.0))
            .collect();

        let mut trial_cols = cols.clone();
        trial_cols.push(plus.clone());
        trial_cols.push(minus.clone());
        let trial = refit(&trial_cols, y, w)?;
        let improvement = (fit.rss - trial.rss) / fit.rss;
        if !(improvement >= cfg.min_rss_improvement) {
            break;
        }

        let parent_term = terms[cand.parent].clone();
        terms.push(parent_term.with_factor(Hinge::plus(cand.feature, cand.knot)));
        terms.push(parent_term.with_factor(Hinge::minus(cand.feature, cand.knot)));
        for col in [&plus, &minus] {
            if let Some(u) = orthonormalize(col, &q, &wv) {
                q.push(u);
            }
        }
        cols = trial_cols;
        fit = trial;
        forward_rss.push(fit.rss);
    }

    let c = effective_params(terms.iter(), cfg.gcv_penalty);
    let terms_added = terms.len() - 1;
    Ok(MarsModel {
        gcv: gcv_score(fit.rss, n, c),
        terms,
        coefficients: fit.coefficients,
        n_features: p,
        n_samples: n,
        rss: fit.rss,
        effective_params: c,
        gcv_penalty: cfg.gcv_penalty,
        diagnostics: FitDiagnostics {
            forward_rss,
            pruning_gcv: Vec::new(),
            terms_added,
            terms_pruned: 0,
        },
    })
}
