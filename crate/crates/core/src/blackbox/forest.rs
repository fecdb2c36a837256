use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{check_batch, BlackBoxModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sampling::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features examined per split; `None` means `ceil(sqrt(p))`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_features: None, min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { probs: Vec<f64> },
}

/// A CART classification tree stored as a flat node list rooted at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_probs(&self, x: ArrayView1<f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { probs } => return probs,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

/// Bagged Gini trees with soft voting.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_classes: usize,
    pub seed: u64,
}

pub fn fit_forest(ds: &Dataset, n_trees: usize, rng_seed: u64) -> Result<ForestModel> {
    fit_forest_with(ds, &ForestConfig { n_trees, ..ForestConfig::default() }, rng_seed)
}

pub fn fit_forest_with(ds: &Dataset, cfg: &ForestConfig, rng_seed: u64) -> Result<ForestModel> {
    if cfg.n_trees == 0 {
        return Err(Error::InvalidInput("n_trees must be >= 1".into()));
    }
    if cfg.min_samples_leaf == 0 {
        return Err(Error::InvalidInput("min_samples_leaf must be >= 1".into()));
    }
    let p = ds.n_features();
    let mtry = cfg
        .max_features
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p.max(1));
    let builder = TreeBuilder {
        x: ds.features.view(),
        y: &ds.labels,
        n_classes: ds.n_classes,
        mtry,
        min_leaf: cfg.min_samples_leaf,
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(derive_seed(rng_seed, t as u64));
            let n = ds.n_rows();
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            builder.build(sample, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees, n_features: p, n_classes: ds.n_classes, seed: rng_seed })
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    mtry: usize,
    min_leaf: usize,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(&self, sample: Vec<usize>, rng: &mut R) -> Tree {
        let mut nodes = vec![TreeNode::Leaf { probs: Vec::new() }];
        let mut stack = vec![(0usize, sample)];
        while let Some((slot, idx)) = stack.pop() {
            let counts = self.class_counts(&idx);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || idx.len() < 2 * self.min_leaf {
                None
            } else {
                self.best_split(&idx, &counts, rng)
            };
            match split {
                None => {
                    let n = idx.len() as f64;
                    nodes[slot] = TreeNode::Leaf {
                        probs: counts.iter().map(|&c| c as f64 / n).collect(),
                    };
                }
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| self.x[[i, s.feature]] <= s.threshold);
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { probs: Vec::new() });
                    let right = nodes.len();
                    nodes.push(TreeNode::Leaf { probs: Vec::new() });
                    nodes[slot] = TreeNode::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        Tree { nodes }
    }

    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += 1;
        }
        counts
    }

    /// Examines `mtry` random features; keeps drawing further features only
    /// while no valid split has been found.
    fn best_split<R: Rng>(
        &self,
        idx: &[usize],
        counts: &[usize],
        rng: &mut R,
    ) -> Option<SplitChoice> {
        let p = self.x.ncols();
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(rng);
        let n = idx.len();
        let mut best: Option<SplitChoice> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        for (examined, &f) in features.iter().enumerate() {
            if examined >= self.mtry && best.is_some() {
                break;
            }
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[[i, f]], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.n_classes];
            for k in 0..n - 1 {
                left[sorted[k].1] += 1;
                let nl = k + 1;
                let nr = n - nl;
                if sorted[k].0 == sorted[k + 1].0 || nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let imp = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if best.as_ref().is_none_or(|b| imp < b.impurity) {
                    let (a, b) = (sorted[k].0, sorted[k + 1].0);
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(SplitChoice { feature: f, threshold, impurity: imp });
                }
            }
        }
        best
    }
}

impl BlackBoxModel for ForestModel {
    fn name(&self) -> &str {
        "forest"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_batch(self.n_features, x)?;
        let mut out = Array2::<f64>::zeros((x.nrows(), self.n_classes));
        let scale = 1.0 / self.trees.len() as f64;
        for (row, mut o) in x.outer_iter().zip(out.outer_iter_mut()) {
            for tree in &self.trees {
                for (acc, p) in o.iter_mut().zip(tree.leaf_probs(row)) {
                    *acc += p;
                }
            }
            o.mapv_inplace(|v| v * scale);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::from_arrays;
    use crate::sampling::rng::NormalSource;

    fn threshold_data(n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed);
        let mut normal = NormalSource::new();
        let x = Array2::from_shape_fn((n, 3), |_| normal.sample(&mut rng));
        let labels: Vec<usize> = x.column(0).iter().map(|&v| usize::from(v > 0.0)).collect();
        from_arrays("thr", x, &labels).unwrap()
    }

    #[test]
    fn leaves_are_distributions() {
        let ds = threshold_data(100, 1);
        let f = fit_forest(&ds, 5, 3).unwrap();
        assert_eq!(f.trees.len(), 5);
        for t in &f.trees {
            for node in &t.nodes {
                if let TreeNode::Leaf { probs } = node {
                    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn single_tree_is_deterministic() {
        let ds = threshold_data(80, 2);
        let a = fit_forest(&ds, 1, 11).unwrap();
        let b = fit_forest(&ds, 1, 11).unwrap();
        assert_eq!(a, b);
        let pa = a.predict_proba(ds.features.view()).unwrap();
        let pb = b.predict_proba(ds.features.view()).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5, 0], 5), 0.0);
        assert!((gini(&[2, 2], 4) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_trees() {
        let ds = threshold_data(10, 3);
        assert!(fit_forest(&ds, 0, 1).is_err());
    }
}
