//! Regression trees, extra-trees bagging and gradient boosting.
//!
//! Splits send `x[feature] <= threshold` to the left child. Every node
//! records its cover (training rows reaching it); the attribution code
//! relies on covers for conditional expectations.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const N_ESTIMATORS_GRID: [usize; 6] = [100, 300, 500, 700, 1000, 2000];
pub const MAX_DEPTH_GRID: [usize; 8] = [3, 4, 5, 6, 7, 8, 9, 10];
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        cover: usize,
        /// Reduction in sum of squared errors achieved by this split.
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        cover: usize,
    },
}

impl TreeNode {
    pub fn cover(&self) -> usize {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Cover-weighted mean of leaf values.
    pub fn expected_value(&self) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split {
                cover, left, right, ..
            } => {
                (left.cover() as f64 * left.expected_value()
                    + right.cover() as f64 * right.expected_value())
                    / *cover as f64
            }
        }
    }

    /// Visits every internal node as `(feature, gain)`.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *gain);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::Sqrt => n.sqrt().floor() as usize,
            MaxFeatures::Log2 => n.log2().floor() as usize,
            MaxFeatures::All => n_features,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    /// Boosting only.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TreeHyperparams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 3,
            max_features: MaxFeatures::Sqrt,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Best midpoint threshold over all candidate features.
    GreedyExact,
    /// One uniform random threshold per candidate feature; best of those.
    RandomThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    ExtraTrees,
    GradientBoosting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub kind: EnsembleKind,
    pub trees: Vec<TreeNode>,
    /// Boosting: mean of the training target. Unused for bagging.
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
}

impl EnsembleModel {
    /// Factor applied to each tree's output.
    pub fn tree_weight(&self) -> f64 {
        match self.kind {
            EnsembleKind::ExtraTrees => 1.0 / self.trees.len().max(1) as f64,
            EnsembleKind::GradientBoosting => self.learning_rate,
        }
    }

    /// Constant added to the weighted tree sum.
    pub fn offset(&self) -> f64 {
        match self.kind {
            EnsembleKind::ExtraTrees => 0.0,
            EnsembleKind::GradientBoosting => self.base_score,
        }
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        self.offset() + self.tree_weight() * sum
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.predict_row(r)).collect())
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    max_depth: usize,
    n_candidates: usize,
    mode: SplitMode,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

impl Builder<'_> {
    fn build(&self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let n = rows.len();
        let value = mean(rows.iter().map(|&i| self.y[i]), n);
        let leaf = TreeNode::Leaf { value, cover: n };
        if depth >= self.max_depth || n < 2 {
            return leaf;
        }
        let first = self.y[rows[0]];
        if rows.iter().all(|&i| self.y[i] == first) {
            return leaf;
        }
        let varying: Vec<usize> = (0..self.x.ncols())
            .filter(|&j| {
                let v0 = self.x[[rows[0], j]];
                rows.iter().any(|&i| self.x[[i, j]] != v0)
            })
            .collect();
        if varying.is_empty() {
            return leaf;
        }
        let k = self.n_candidates.min(varying.len());
        let mut candidates: Vec<usize> = sample(rng, varying.len(), k)
            .into_iter()
            .map(|i| varying[i])
            .collect();
        candidates.sort_unstable();

        let sse = {
            let (s, s2) = rows
                .iter()
                .fold((0.0, 0.0), |(s, s2), &i| (s + self.y[i], s2 + self.y[i] * self.y[i]));
            (s2 - s * s / n as f64).max(0.0)
        };

        let mut best: Option<Candidate> = None;
        for &feature in &candidates {
            let cand = match self.mode {
                SplitMode::GreedyExact => self.best_exact(rows, feature),
                SplitMode::RandomThreshold => self.random_split(rows, feature, rng),
            };
            if let Some(c) = cand {
                // Strict comparison keeps the lowest feature index (and, within
                // a feature, the lowest threshold) among equal gains.
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else { return leaf };
        if !(best.gain > 1e-12 * sse) {
            return leaf;
        }
        let split_at = partition(rows, |i| self.x[[i, best.feature]] <= best.threshold);
        if split_at == 0 || split_at == n {
            return leaf;
        }
        let (l, r) = rows.split_at_mut(split_at);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            cover: n,
            gain: best.gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Scans midpoints between consecutive distinct values.
    fn best_exact(&self, rows: &[usize], feature: usize) -> Option<Candidate> {
        let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| (self.x[[i, feature]], self.y[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len() as f64;
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut left_sum = 0.0;
        let mut best: Option<Candidate> = None;
        for i in 0..pairs.len() - 1 {
            left_sum += pairs[i].1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n - nl;
            let right_sum = total - left_sum;
            // SSE reduction = Σl²/nl + Σr²/nr − Σ²/n.
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - total * total / n;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (pairs[i].0 + pairs[i + 1].0);
                if threshold >= pairs[i + 1].0 {
                    threshold = pairs[i].0;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }

    fn random_split(&self, rows: &[usize], feature: usize, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = self.x[[i, feature]];
            (lo.min(v), hi.max(v))
        });
        if lo >= hi {
            return None;
        }
        let threshold = rng.random_range(lo..hi);
        let (mut nl, mut sl, mut sr) = (0usize, 0.0, 0.0);
        for &i in rows {
            if self.x[[i, feature]] <= threshold {
                nl += 1;
                sl += self.y[i];
            } else {
                sr += self.y[i];
            }
        }
        let n = rows.len();
        let nr = n - nl;
        if nl == 0 || nr == 0 {
            return None;
        }
        let total = sl + sr;
        let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - total * total / n as f64;
        Some(Candidate {
            feature,
            threshold,
            gain,
        })
    }
}

/// Stable partition; returns the number of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| pred(i));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}

/// Fits one regression tree on `(x, y)`.
pub fn fit_tree(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    hp: &TreeHyperparams,
    mode: SplitMode,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode> {
    check_input(x, y)?;
    let y: Vec<f64> = y.to_vec();
    let builder = Builder {
        x,
        y: &y,
        max_depth: hp.max_depth,
        n_candidates: hp.max_features.count(x.ncols()),
        mode,
    };
    let mut rows: Vec<usize> = (0..x.nrows()).collect();
    Ok(builder.build(&mut rows, 0, rng))
}

fn check_input(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Validation(format!(
            "X has {} rows but y has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("cannot fit a tree on zero rows".into()));
    }
    Ok(())
}

/// Independent random stream for tree or stage `index`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Random-threshold trees on the whole sample, averaged.
pub fn fit_extra_trees(x: ArrayView2<f64>, y: ArrayView1<f64>, hp: &TreeHyperparams) -> Result<EnsembleModel> {
    check_input(x, y)?;
    if hp.n_estimators == 0 {
        return Err(Error::Config("n_estimators must be positive".into()));
    }
    let trees = par::map_range(hp.n_estimators, |t| {
        let mut rng = tree_rng(hp.seed, t);
        fit_tree(x, y, hp, SplitMode::RandomThreshold, &mut rng)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        kind: EnsembleKind::ExtraTrees,
        trees,
        base_score: 0.0,
        learning_rate: 1.0,
        n_features: x.ncols(),
    })
}

/// Squared-error gradient boosting with exact greedy trees.
pub fn fit_gbm(x: ArrayView2<f64>, y: ArrayView1<f64>, hp: &TreeHyperparams) -> Result<EnsembleModel> {
    fit_gbm_traced(x, y, hp, None)
}

/// As [`fit_gbm`], optionally recording training MSE after each stage.
pub fn fit_gbm_traced(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    hp: &TreeHyperparams,
    mut mse_trace: Option<&mut Vec<f64>>,
) -> Result<EnsembleModel> {
    check_input(x, y)?;
    if hp.n_estimators == 0 {
        return Err(Error::Config("n_estimators must be positive".into()));
    }
    if !(hp.learning_rate > 0.0 && hp.learning_rate <= 1.0) {
        return Err(Error::Config(format!(
            "learning_rate {} not in (0, 1]",
            hp.learning_rate
        )));
    }
    let n = y.len();
    let base = y.sum() / n as f64;
    let mut fitted = Array1::from_elem(n, base);
    let mut trees = Vec::with_capacity(hp.n_estimators);
    for stage in 0..hp.n_estimators {
        let resid = &y - &fitted;
        let mut rng = tree_rng(hp.seed, stage);
        let tree = fit_tree(x, resid.view(), hp, SplitMode::GreedyExact, &mut rng)?;
        for (i, row) in x.rows().into_iter().enumerate() {
            fitted[i] += hp.learning_rate * tree.predict_row(row);
        }
        trees.push(tree);
        if let Some(t) = mse_trace.as_deref_mut() {
            t.push((&y - &fitted).mapv(|r| r * r).sum() / n as f64);
        }
    }
    Ok(EnsembleModel {
        kind: EnsembleKind::GradientBoosting,
        trees,
        base_score: base,
        learning_rate: hp.learning_rate,
        n_features: x.ncols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn hp(n_estimators: usize, max_depth: usize) -> TreeHyperparams {
        TreeHyperparams {
            n_estimators,
            max_depth,
            max_features: MaxFeatures::All,
            learning_rate: 1.0,
            seed: 7,
        }
    }

    fn random_data(seed: u64, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| (rng.random_range(0..10) as f64) / 2.0);
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] * 2.0 - x[[i, p - 1]] + rng.random_range(-1.0..1.0));
        (x, y)
    }

    fn check_covers(node: &TreeNode) {
        if let TreeNode::Split { cover, left, right, gain, .. } = node {
            assert_eq!(*cover, left.cover() + right.cover());
            assert!(*gain >= 0.0);
            check_covers(left);
            check_covers(right);
        }
        assert!(node.cover() >= 1);
    }

    /// Rows reaching each leaf, found by routing every training row.
    fn leaf_means_match(tree: &TreeNode, x: &Array2<f64>, y: &Array1<f64>) {
        fn walk(node: &TreeNode, rows: Vec<usize>, x: &Array2<f64>, y: &Array1<f64>) {
            match node {
                TreeNode::Leaf { value, cover } => {
                    assert_eq!(*cover, rows.len());
                    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
                    assert!((m - value).abs() < 1e-12);
                }
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.into_iter().partition(|&i| x[[i, *feature]] <= *threshold);
                    walk(left, l, x, y);
                    walk(right, r, x, y);
                }
            }
        }
        walk(tree, (0..y.len()).collect(), x, y);
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![4.0, 4.0, 4.0];
        let t = fit_tree(x.view(), y.view(), &hp(1, 5), SplitMode::GreedyExact, &mut tree_rng(0, 0)).unwrap();
        assert_eq!(t, TreeNode::Leaf { value: 4.0, cover: 3 });
    }

    #[test]
    fn exact_split_at_midpoint() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![0.0, 0.0, 10.0, 10.0];
        let t = fit_tree(x.view(), y.view(), &hp(1, 1), SplitMode::GreedyExact, &mut tree_rng(0, 0)).unwrap();
        match t {
            TreeNode::Split { feature, threshold, left, right, cover, gain } => {
                assert_eq!((feature, threshold, cover), (0, 2.5, 4));
                assert_eq!(*left, TreeNode::Leaf { value: 0.0, cover: 2 });
                assert_eq!(*right, TreeNode::Leaf { value: 10.0, cover: 2 });
                assert_eq!(gain, 100.0);
            }
            other => panic!("{other:?}"),
        }
    }

    /// Brute force: every (feature, midpoint) candidate's SSE reduction.
    fn brute_best_gain(x: &Array2<f64>, y: &Array1<f64>) -> f64 {
        let sse = |idx: &[usize]| {
            if idx.is_empty() {
                return 0.0;
            }
            let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
        };
        let all: Vec<usize> = (0..y.len()).collect();
        let mut best = f64::NEG_INFINITY;
        for j in 0..x.ncols() {
            let mut vals: Vec<f64> = x.column(j).to_vec();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[[i, j]] <= t);
                best = best.max(sse(&all) - sse(&l) - sse(&r));
            }
        }
        best
    }

    #[test]
    fn greedy_root_matches_brute_force_and_leaves_are_means() {
        for seed in 0..30 {
            let (x, y) = random_data(seed, 5 + (seed as usize % 15), 3);
            let t = fit_tree(x.view(), y.view(), &hp(1, 4), SplitMode::GreedyExact, &mut tree_rng(seed, 0)).unwrap();
            check_covers(&t);
            leaf_means_match(&t, &x, &y);
            assert!(t.depth() <= 4);
            if let TreeNode::Split { gain, .. } = &t {
                assert!((gain - brute_best_gain(&x, &y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn depth_zero_predicts_mean() {
        let (x, y) = random_data(1, 12, 2);
        let t = fit_tree(x.view(), y.view(), &hp(1, 0), SplitMode::GreedyExact, &mut tree_rng(0, 0)).unwrap();
        assert!(matches!(t, TreeNode::Leaf { cover: 12, .. }));
        assert!((t.predict_row(x.row(0)) - y.mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn tie_breaks_on_lowest_feature() {
        // Two identical columns give identical gains.
        let x = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
        let y = array![0.0, 0.0, 10.0, 10.0];
        let t = fit_tree(x.view(), y.view(), &hp(1, 1), SplitMode::GreedyExact, &mut tree_rng(0, 0)).unwrap();
        assert!(matches!(t, TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn extra_trees_cases() {
        let (x, y) = random_data(3, 40, 3);
        let mut h = hp(1, 4);
        let single = fit_extra_trees(x.view(), y.view(), &h).unwrap();
        let tree = fit_tree(x.view(), y.view(), &h, SplitMode::RandomThreshold, &mut tree_rng(h.seed, 0)).unwrap();
        assert_eq!(single.trees[0], tree);
        assert_eq!(single.predict(x.view()).unwrap()[5], tree.predict_row(x.row(5)));

        h.n_estimators = 10;
        let a = fit_extra_trees(x.view(), y.view(), &h).unwrap();
        let b = fit_extra_trees(x.view(), y.view(), &h).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        a.trees.iter().for_each(check_covers);

        let c = Array1::from_elem(40, 3.25);
        let flat = fit_extra_trees(x.view(), c.view(), &h).unwrap();
        assert!(flat.predict(x.view()).unwrap().iter().all(|p| *p == 3.25));
    }

    #[test]
    fn gbm_single_stage_fits_exactly() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = array![1.0, 5.0, -2.0, 8.0];
        let m = fit_gbm(x.view(), y.view(), &hp(1, 3)).unwrap();
        for (p, t) in m.predict(x.view()).unwrap().iter().zip(y.iter()) {
            assert!((p - t).abs() < 1e-12);
        }
    }

    #[test]
    fn gbm_hand_stage_update() {
        let x = array![[0.0], [1.0]];
        let y = array![0.0, 10.0];
        let h = TreeHyperparams { learning_rate: 0.5, ..hp(1, 1) };
        let m = fit_gbm(x.view(), y.view(), &h).unwrap();
        assert_eq!(m.base_score, 5.0);
        assert_eq!(m.predict(x.view()).unwrap().to_vec(), vec![2.5, 7.5]);
    }

    #[test]
    fn gbm_training_mse_non_increasing() {
        let (x, y) = random_data(9, 60, 4);
        let h = TreeHyperparams { learning_rate: 0.1, n_estimators: 50, max_depth: 3, max_features: MaxFeatures::Sqrt, seed: 1 };
        let mut trace = Vec::new();
        let m = fit_gbm_traced(x.view(), y.view(), &h, Some(&mut trace)).unwrap();
        let mse0 = y.mapv(|v| (v - m.base_score).powi(2)).mean().unwrap();
        assert!(trace[0] <= mse0 + 1e-12);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(16), 4);
        assert_eq!(MaxFeatures::Log2.count(16), 4);
        assert_eq!(MaxFeatures::Sqrt.count(1), 1);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
        assert_eq!(MaxFeatures::Sqrt.count(13), 3);
    }

    #[test]
    fn dimension_mismatch() {
        let (x, y) = random_data(2, 10, 2);
        let m = fit_gbm(x.view(), y.view(), &hp(2, 2)).unwrap();
        assert!(matches!(m.predict(array![[1.0]].view()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn tree_json_shape() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![0.0, 0.0, 10.0, 10.0];
        let t = fit_tree(x.view(), y.view(), &hp(1, 1), SplitMode::GreedyExact, &mut tree_rng(0, 0)).unwrap();
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["type"], "split");
        assert_eq!(v["threshold"], 2.5);
        assert_eq!(v["left"]["cover"], 2);
        let back: TreeNode = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
