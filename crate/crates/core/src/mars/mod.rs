//! Multivariate adaptive regression splines.
//!
//! A model is a weighted sum of basis terms, each a product of hinge
//! functions `(x_j - t)₊` or `(t - x_j)₊`. Fitting runs a greedy forward pass
//! that adds mirrored hinge pairs, followed by a backward pass that deletes
//! terms one at a time and keeps the submodel with the lowest generalized
//! cross-validation score.

mod forward;

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use forward::fit_forward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HingeDirection {
    /// `(x - t)₊`
    Plus,
    /// `(t - x)₊`
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    pub feature: usize,
    pub knot: f64,
    pub direction: HingeDirection,
}

impl Hinge {
    pub fn plus(feature: usize, knot: f64) -> Self {
        Self { feature, knot, direction: HingeDirection::Plus }
    }

    pub fn minus(feature: usize, knot: f64) -> Self {
        Self { feature, knot, direction: HingeDirection::Minus }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.direction {
            HingeDirection::Plus => (x - self.knot).max(0.0),
            HingeDirection::Minus => (self.knot - x).max(0.0),
        }
    }

    /// Right derivative with respect to `x`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self.direction {
            HingeDirection::Plus if x >= self.knot => 1.0,
            HingeDirection::Minus if x < self.knot => -1.0,
            _ => 0.0,
        }
    }

    fn same_as(&self, other: &Hinge) -> bool {
        self.feature == other.feature
            && self.direction == other.direction
            && self.knot.to_bits() == other.knot.to_bits()
    }
}

/// Product of hinges; the empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BasisTerm {
    pub factors: Vec<Hinge>,
}

impl BasisTerm {
    pub fn intercept() -> Self {
        Self { factors: Vec::new() }
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn uses_feature(&self, j: usize) -> bool {
        self.factors.iter().any(|h| h.feature == j)
    }

    pub fn with_factor(&self, h: Hinge) -> Self {
        let mut factors = self.factors.clone();
        factors.push(h);
        Self { factors }
    }

    pub fn eval(&self, x: ArrayView1<f64>) -> f64 {
        self.factors.iter().map(|h| h.eval(x[h.feature])).product()
    }
}

pub fn eval_basis(term: &BasisTerm, x: ArrayView1<f64>) -> f64 {
    term.eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotCandidates {
    /// Every observed value up to 1000 rows, an even 1000-point subsample of
    /// the sorted values beyond that.
    Auto,
    AllObserved,
    Subsample(usize),
}

pub const SURROGATE_SPAN_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Hinge pairs the forward pass may add; the model has at most
    /// `1 + 2 · max_terms` terms.
    pub max_terms: usize,
    pub max_degree: usize,
    /// GCV cost per knot.
    pub gcv_penalty: f64,
    /// Forward pass stops once a pair improves RSS by less than this
    /// fraction.
    pub min_rss_improvement: f64,
    pub knot_candidates: KnotCandidates,
    /// Significance level of the knot spacing rule: knots keep
    /// `3 - log2(α/p)` rows under the parent from either end and
    /// `-log2(-ln(1-α)/(p·n))/2.5` rows from each other. 0 disables it.
    pub span_alpha: f64,
}

impl FitConfig {
    /// Defaults for `p` features: `min(21, 2p + 1)` pairs, degree 2,
    /// penalty 3.
    pub fn for_features(p: usize) -> Self {
        Self {
            max_terms: (2 * p + 1).min(21),
            max_degree: 2,
            gcv_penalty: 3.0,
            min_rss_improvement: 1e-8,
            knot_candidates: KnotCandidates::Auto,
            span_alpha: 0.0,
        }
    }

    /// [`FitConfig::for_features`] with the knot spacing rule at α = 0.05,
    /// the setting used for local surrogates.
    pub fn for_surrogate(p: usize) -> Self {
        Self { span_alpha: SURROGATE_SPAN_ALPHA, ..Self::for_features(p) }
    }

    /// Penalty for the given degree cap: 2 for additive models, 3 otherwise.
    pub fn default_penalty(max_degree: usize) -> f64 {
        if max_degree <= 1 {
            2.0
        } else {
            3.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_terms < 1 {
            return Err(Error::InvalidInput("max_terms must be >= 1".into()));
        }
        if self.max_degree < 1 {
            return Err(Error::InvalidInput("max_degree must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.span_alpha) {
            return Err(Error::InvalidInput("span_alpha must be in [0, 1)".into()));
        }
        if !(self.gcv_penalty >= 0.0) || !(self.min_rss_improvement >= 0.0) {
            return Err(Error::InvalidInput(
                "gcv_penalty and min_rss_improvement must be non-negative".into(),
            ));
        }
        if let KnotCandidates::Subsample(0) = self.knot_candidates {
            return Err(Error::InvalidInput("knot subsample must be >= 1".into()));
        }
        Ok(())
    }
}

/// Partial [`FitConfig`]; unset fields take the surrogate defaults of
/// [`FitConfig::for_surrogate`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOverrides {
    pub max_terms: Option<usize>,
    pub max_degree: Option<usize>,
    pub gcv_penalty: Option<f64>,
    pub min_rss_improvement: Option<f64>,
    pub knot_candidates: Option<KnotCandidates>,
    pub span_alpha: Option<f64>,
}

impl FitOverrides {
    pub fn resolve(&self, p: usize) -> FitConfig {
        let base = FitConfig::for_surrogate(p);
        let max_degree = self.max_degree.unwrap_or(base.max_degree);
        FitConfig {
            max_terms: self.max_terms.unwrap_or(base.max_terms),
            max_degree,
            gcv_penalty: self
                .gcv_penalty
                .unwrap_or_else(|| FitConfig::default_penalty(max_degree)),
            min_rss_improvement: self.min_rss_improvement.unwrap_or(base.min_rss_improvement),
            knot_candidates: self.knot_candidates.unwrap_or(base.knot_candidates),
            span_alpha: self.span_alpha.unwrap_or(base.span_alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitDiagnostics {
    /// Training RSS after the intercept and after each accepted pair.
    pub forward_rss: Vec<f64>,
    /// GCV along the deletion path, starting with the full forward model.
    pub pruning_gcv: Vec<f64>,
    pub terms_added: usize,
    pub terms_pruned: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarsModel {
    pub terms: Vec<BasisTerm>,
    pub coefficients: Array1<f64>,
    pub n_features: usize,
    pub n_samples: usize,
    /// Weighted residual sum of squares on the training data.
    pub rss: f64,
    pub effective_params: f64,
    pub gcv: f64,
    pub gcv_penalty: f64,
    pub diagnostics: FitDiagnostics,
}

/// `(rss/n) / (1 - C/n)²`, or `+∞` once `C ≥ n`.
pub fn gcv_score(rss: f64, n: usize, effective_params: f64) -> f64 {
    let n = n as f64;
    if effective_params >= n {
        return f64::INFINITY;
    }
    let denom = 1.0 - effective_params / n;
    (rss / n) / (denom * denom)
}

/// Distinct hinge factors over the non-intercept terms.
pub fn count_knots<'a>(terms: impl IntoIterator<Item = &'a BasisTerm>) -> usize {
    let mut seen: Vec<Hinge> = Vec::new();
    for h in terms.into_iter().flat_map(|t| t.factors.iter()) {
        if !seen.iter().any(|s| s.same_as(h)) {
            seen.push(*h);
        }
    }
    seen.len()
}

/// `#terms + d · #knots`.
pub fn effective_params<'a>(
    terms: impl IntoIterator<Item = &'a BasisTerm> + Clone,
    penalty: f64,
) -> f64 {
    let n_terms = terms.clone().into_iter().count();
    n_terms as f64 + penalty * count_knots(terms) as f64
}

impl MarsModel {
    /// A model with given terms and coefficients and no training record.
    pub fn from_terms(terms: Vec<BasisTerm>, coefficients: Array1<f64>, n_features: usize) -> Self {
        assert_eq!(terms.len(), coefficients.len(), "one coefficient per term");
        MarsModel {
            terms,
            coefficients,
            n_features,
            n_samples: 0,
            rss: 0.0,
            effective_params: 0.0,
            gcv: 0.0,
            gcv_penalty: 0.0,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> f64 {
        self.terms
            .iter()
            .zip(self.coefficients.iter())
            .map(|(t, b)| b * t.eval(x))
            .sum()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.nrows() > 0 && x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        Ok(x.outer_iter().map(|row| self.predict_one(row)).collect())
    }

    /// Gradient of the fitted function at `x` (right derivatives at knots).
    pub fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut grad = Array1::zeros(self.n_features);
        for (term, beta) in self.terms.iter().zip(self.coefficients.iter()) {
            for (i, h) in term.factors.iter().enumerate() {
                let dh = h.derivative(x[h.feature]);
                if dh == 0.0 {
                    continue;
                }
                let rest: f64 = term
                    .factors
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .map(|(_, g)| g.eval(x[g.feature]))
                    .product();
                grad[h.feature] += beta * dh * rest;
            }
        }
        grad
    }

    /// One line per term: `β · (x_j - t)+ · (t - x_k)+`.
    pub fn dump(&self, feature_names: Option<&[String]>) -> String {
        self.to_string_with(feature_names)
    }

    fn to_string_with(&self, names: Option<&[String]>) -> String {
        let name = |j: usize| -> String {
            names
                .and_then(|n| n.get(j).cloned())
                .unwrap_or_else(|| format!("x{j}"))
        };
        let mut out = String::new();
        for (term, beta) in self.terms.iter().zip(self.coefficients.iter()) {
            out.push_str(&format!("{beta:?}"));
            for h in &term.factors {
                match h.direction {
                    HingeDirection::Plus => {
                        out.push_str(&format!(" · +({} - {:?})", name(h.feature), h.knot))
                    }
                    HingeDirection::Minus => {
                        out.push_str(&format!(" · -({} - {:?})", name(h.feature), h.knot))
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MarsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_string_with(None))
    }
}

pub fn predict(model: &MarsModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    model.predict(x)
}

pub fn attribution_mars(model: &MarsModel, x: ArrayView1<f64>) -> Array1<f64> {
    model.gradient(x)
}

/// Evaluates every term on every row.
pub(crate) fn design_matrix(terms: &[BasisTerm], x: ArrayView2<f64>) -> Array2<f64> {
    let mut b = Array2::zeros((x.nrows(), terms.len()));
    for (i, row) in x.outer_iter().enumerate() {
        for (k, t) in terms.iter().enumerate() {
            b[[i, k]] = t.eval(row);
        }
    }
    b
}

/// Weighted least squares on the columns `cols` of `gram`, with the ridge
/// floor `1e-10 · max(G_kk, 1)` added to each diagonal entry.
pub(crate) fn solve_subset(
    gram: &Array2<f64>,
    rhs: &Array1<f64>,
    cols: &[usize],
) -> Result<Array1<f64>> {
    let m = cols.len();
    let mut g = Array2::zeros((m, m));
    let mut r = Array1::zeros(m);
    for (a, &ca) in cols.iter().enumerate() {
        r[a] = rhs[ca];
        for (b, &cb) in cols.iter().enumerate() {
            g[[a, b]] = gram[[ca, cb]];
        }
        g[[a, a]] += RIDGE_FLOOR * g[[a, a]].max(1.0);
    }
    linalg::cholesky_solve(&g, &r)
}

pub(crate) const RIDGE_FLOOR: f64 = 1e-10;

pub(crate) fn weighted_rss(
    b: &Array2<f64>,
    cols: &[usize],
    coef: &Array1<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> f64 {
    let mut rss = 0.0;
    for i in 0..b.nrows() {
        let mut f = 0.0;
        for (k, &c) in cols.iter().enumerate() {
            f += coef[k] * b[[i, c]];
        }
        let r = y[i] - f;
        rss += w[i] * r * r;
    }
    rss
}

/// Backward deletion with GCV model selection.
pub fn prune_backward(
    model: &MarsModel,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    cfg: &FitConfig,
) -> Result<MarsModel> {
    cfg.validate()?;
    forward::check_inputs(x, y, w)?;
    if x.ncols() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            found: x.ncols(),
        });
    }
    let n = x.nrows();
    let penalty = cfg.gcv_penalty;
    let b = design_matrix(&model.terms, x);
    let (gram, rhs) = linalg::weighted_gram(b.view(), y, w);

    let score = |cols: &[usize]| -> Result<(f64, Array1<f64>, f64)> {
        let coef = solve_subset(&gram, &rhs, cols)?;
        let rss = weighted_rss(&b, cols, &coef, y, w);
        let c = effective_params(cols.iter().map(|&k| &model.terms[k]), penalty);
        Ok((gcv_score(rss, n, c), coef, rss))
    };

    let mut current: Vec<usize> = (0..model.terms.len()).collect();
    let (gcv0, coef0, rss0) = score(&current)?;
    let mut best = (gcv0, current.clone(), coef0, rss0);
    let mut path = vec![gcv0];

    while current.len() > 1 {
        let mut step: Option<(f64, usize, Array1<f64>, f64)> = None;
        for pos in 1..current.len() {
            let mut trial = current.clone();
            trial.remove(pos);
            let (g, coef, rss) = score(&trial)?;
            if step.as_ref().is_none_or(|s| g < s.0) {
                step = Some((g, pos, coef, rss));
            }
        }
        let (g, pos, coef, rss) = step.expect("at least one deletable term");
        current.remove(pos);
        path.push(g);
        // ties go to the smaller model
        if g <= best.0 {
            best = (g, current.clone(), coef, rss);
        }
    }

    let (_, keep, coef, rss) = best;
    let terms: Vec<BasisTerm> = keep.iter().map(|&k| model.terms[k].clone()).collect();
    let c = effective_params(terms.iter(), penalty);
    let mut diagnostics = model.diagnostics.clone();
    diagnostics.pruning_gcv = path;
    diagnostics.terms_pruned = model.terms.len() - terms.len();
    Ok(MarsModel {
        terms,
        coefficients: coef,
        n_features: model.n_features,
        n_samples: n,
        rss,
        effective_params: c,
        gcv: gcv_score(rss, n, c),
        gcv_penalty: penalty,
        diagnostics,
    })
}

/// Forward pass followed by backward pruning.
pub fn fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    cfg: &FitConfig,
) -> Result<MarsModel> {
    let forward = fit_forward(x, y, w, cfg)?;
    prune_backward(&forward, x, y, w, cfg)
}
