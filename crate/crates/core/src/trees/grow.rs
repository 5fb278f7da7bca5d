//! Greedy top-down tree growth and split search.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::binning::BinnedColumns;
use super::{DecisionTree, LeafValue, SplitCandidate, SplitStrategy, TreeConfig, TreeError, TreeNode, TreeTask};
use crate::dataset::{ClassId, Dataset};
use crate::rng::seeded_rng;

/// Node work (rows × candidate features) above which features are scanned
/// in parallel.
const PARALLEL_WORK: usize = 64 * 1024;

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes { labels: &'a [ClassId], n_classes: usize },
    Gradients(&'a [f64]),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Gradients(g) => g.len(),
        }
    }
}

/// Fits one tree on column-major features.
pub fn fit_tree(
    columns: &[Vec<f64>],
    targets: Targets<'_>,
    cfg: &TreeConfig,
    seed: u64,
) -> Result<DecisionTree, TreeError> {
    TreeBuilder::new(columns, cfg.clone())?.fit(targets, None, seed)
}

/// Fits a classification tree on a dataset.
pub fn fit_tree_on(d: &Dataset, cfg: &TreeConfig, seed: u64) -> Result<DecisionTree, TreeError> {
    fit_tree(
        d.columns(),
        Targets::Classes {
            labels: d.labels(),
            n_classes: d.n_classes(),
        },
        cfg,
        seed,
    )
}

/// Holds the training matrix and any precomputed binning, so that many trees
/// (bootstrap replicas, boosting rounds) can share the preparation work.
pub struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    config: TreeConfig,
    binned: Option<BinnedColumns>,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(columns: &'a [Vec<f64>], config: TreeConfig) -> Result<Self, TreeError> {
        config.validate()?;
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(TreeError::InvalidConfig("ragged feature columns".into()));
            }
            if columns.iter().flatten().any(|v| !v.is_finite()) {
                return Err(TreeError::NonFiniteInput);
            }
        }
        let binned = match config.split_strategy {
            SplitStrategy::Exact => None,
            SplitStrategy::Histogram { bins } => Some(BinnedColumns::new(columns, bins)),
        };
        Ok(TreeBuilder {
            columns,
            config,
            binned,
        })
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    /// Grows a tree. `weights` are per-row multiplicities (bootstrap counts);
    /// rows of weight zero are ignored.
    pub fn fit(&self, targets: Targets<'_>, weights: Option<&[u32]>, seed: u64) -> Result<DecisionTree, TreeError> {
        let n_rows = targets.len();
        if let Some(first) = self.columns.first() {
            if first.len() != n_rows {
                return Err(TreeError::DimensionMismatch {
                    expected: first.len(),
                    got: n_rows,
                });
            }
        }
        if let Some(w) = weights {
            if w.len() != n_rows {
                return Err(TreeError::DimensionMismatch {
                    expected: n_rows,
                    got: w.len(),
                });
            }
        }
        let rows: Vec<u32> = (0..n_rows as u32)
            .filter(|&r| weights.is_none_or(|w| w[r as usize] > 0))
            .collect();
        if rows.is_empty() {
            return Err(TreeError::EmptyInput);
        }
        match (self.config.task, targets) {
            (TreeTask::Classification, Targets::Classes { labels, n_classes }) => {
                if n_classes == 0 || labels.iter().any(|&l| l as usize >= n_classes) {
                    return Err(TreeError::InvalidConfig("label outside the class range".into()));
                }
                let objective = ClassObjective { labels, n_classes };
                Ok(self.grow_tree(&objective, rows, weights, seed))
            }
            (TreeTask::RegressionOnGradients, Targets::Gradients(gradients)) => {
                if gradients.iter().any(|g| !g.is_finite()) {
                    return Err(TreeError::NonFiniteInput);
                }
                let objective = GradientObjective { gradients };
                Ok(self.grow_tree(&objective, rows, weights, seed))
            }
            (task, _) => Err(TreeError::TaskMismatch(task)),
        }
    }

    fn grow_tree<O: Objective>(
        &self,
        objective: &O,
        rows: Vec<u32>,
        weights: Option<&[u32]>,
        seed: u64,
    ) -> DecisionTree {
        let mut grower = Grower {
            builder: self,
            objective,
            weights,
            rng: seeded_rng(seed),
            n_features: self.columns.len(),
            n_candidates: self.config.feature_subsample.resolve(self.columns.len()),
        };
        let root = grower.grow(rows, 0);
        DecisionTree::from_root(root, self.columns.len(), self.config.clone())
    }
}

/// Split criterion over flat per-node statistics vectors.
trait Objective: Sync {
    type Score: Copy + Send;

    fn width(&self) -> usize;
    fn accumulate(&self, stats: &mut [f64], row: usize, weight: f64);
    fn weight(&self, stats: &[f64]) -> f64;
    fn score(&self, left: &[f64], right: &[f64]) -> Self::Score;
    /// Strict "better than"; ties keep the earlier candidate.
    fn beats(&self, a: &Self::Score, b: &Self::Score) -> bool;
    /// Whether the split strictly lowers the node loss.
    fn improves(&self, parent: &[f64], score: &Self::Score) -> bool;
    /// `(impurity_decrease, gain)` of an improving split.
    fn describe(&self, parent: &[f64], score: &Self::Score) -> (f64, f64);
    fn is_pure(&self, stats: &[f64], rows: &[u32]) -> bool;
    fn leaf(&self, stats: &[f64]) -> LeafValue;
}

/// Gini criterion. Stats are class weights followed by the total weight;
/// all entries are integers held exactly in f64.
struct ClassObjective<'t> {
    labels: &'t [ClassId],
    n_classes: usize,
}

/// Split score `Σ L_c²/W_L + Σ R_c²/W_R` kept as an exact fraction.
#[derive(Debug, Clone, Copy)]
struct Fraction {
    num: u128,
    den: u128,
}

fn sum_squares(counts: &[f64]) -> u128 {
    counts.iter().map(|&c| (c as u128) * (c as u128)).sum()
}

fn frac_gt(a_num: u128, a_den: u128, b_num: u128, b_den: u128) -> bool {
    match (a_num.checked_mul(b_den), b_num.checked_mul(a_den)) {
        (Some(x), Some(y)) => x > y,
        _ => (a_num as f64 / a_den as f64) > (b_num as f64 / b_den as f64),
    }
}

impl Objective for ClassObjective<'_> {
    type Score = Fraction;

    fn width(&self) -> usize {
        self.n_classes + 1
    }

    #[inline]
    fn accumulate(&self, stats: &mut [f64], row: usize, weight: f64) {
        stats[self.labels[row] as usize] += weight;
        stats[self.n_classes] += weight;
    }

    #[inline]
    fn weight(&self, stats: &[f64]) -> f64 {
        stats[self.n_classes]
    }

    fn score(&self, left: &[f64], right: &[f64]) -> Fraction {
        let k = self.n_classes;
        let (wl, wr) = (left[k] as u128, right[k] as u128);
        Fraction {
            num: sum_squares(&left[..k]) * wr + sum_squares(&right[..k]) * wl,
            den: wl * wr,
        }
    }

    fn beats(&self, a: &Fraction, b: &Fraction) -> bool {
        frac_gt(a.num, a.den, b.num, b.den)
    }

    fn improves(&self, parent: &[f64], score: &Fraction) -> bool {
        let k = self.n_classes;
        frac_gt(score.num, score.den, sum_squares(&parent[..k]), parent[k] as u128)
    }

    fn describe(&self, parent: &[f64], score: &Fraction) -> (f64, f64) {
        // ΔI = (score - A/W) / W with A = Σ parent_c².
        let k = self.n_classes;
        let w = parent[k] as u128;
        let a = sum_squares(&parent[..k]);
        let decrease = match (score.num.checked_mul(w), a.checked_mul(score.den)) {
            (Some(x), Some(y)) => (x - y) as f64 / (score.den as f64 * (w * w) as f64),
            _ => (score.num as f64 / score.den as f64 - a as f64 / w as f64) / w as f64,
        };
        (decrease, decrease * parent[k])
    }

    fn is_pure(&self, stats: &[f64], _rows: &[u32]) -> bool {
        stats[..self.n_classes].iter().any(|&c| c == stats[self.n_classes])
    }

    fn leaf(&self, stats: &[f64]) -> LeafValue {
        let total = stats[self.n_classes];
        LeafValue::Distribution(stats[..self.n_classes].iter().map(|&c| c / total).collect())
    }
}

/// Variance reduction on gradients. Stats are `[Σ w·g, Σ w]`.
struct GradientObjective<'t> {
    gradients: &'t [f64],
}

impl Objective for GradientObjective<'_> {
    type Score = f64;

    fn width(&self) -> usize {
        2
    }

    #[inline]
    fn accumulate(&self, stats: &mut [f64], row: usize, weight: f64) {
        stats[0] += weight * self.gradients[row];
        stats[1] += weight;
    }

    #[inline]
    fn weight(&self, stats: &[f64]) -> f64 {
        stats[1]
    }

    fn score(&self, left: &[f64], right: &[f64]) -> f64 {
        left[0] * left[0] / left[1] + right[0] * right[0] / right[1]
    }

    fn beats(&self, a: &f64, b: &f64) -> bool {
        a > b
    }

    fn improves(&self, parent: &[f64], score: &f64) -> bool {
        let gain = score - parent[0] * parent[0] / parent[1];
        gain.is_finite() && gain > 0.0
    }

    fn describe(&self, parent: &[f64], score: &f64) -> (f64, f64) {
        let gain = score - parent[0] * parent[0] / parent[1];
        (gain / parent[1], gain)
    }

    fn is_pure(&self, _stats: &[f64], rows: &[u32]) -> bool {
        let first = self.gradients[rows[0] as usize];
        rows.iter().all(|&r| self.gradients[r as usize] == first)
    }

    fn leaf(&self, stats: &[f64]) -> LeafValue {
        LeafValue::Score(stats[0] / stats[1])
    }
}

struct Best<S> {
    feature: usize,
    threshold: f64,
    score: S,
    left_weight: f64,
    right_weight: f64,
}

/// Threshold strictly below `hi` and at or above `lo`, so `lo` routes left
/// and `hi` routes right.
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo / 2.0 + hi / 2.0;
    if mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

struct Grower<'g, 'a, O> {
    builder: &'g TreeBuilder<'a>,
    objective: &'g O,
    weights: Option<&'g [u32]>,
    rng: ChaCha8Rng,
    n_features: usize,
    n_candidates: usize,
}

impl<O: Objective> Grower<'_, '_, O> {
    #[inline]
    fn row_weight(&self, row: u32) -> f64 {
        self.weights.map_or(1.0, |w| f64::from(w[row as usize]))
    }

    fn node_stats(&self, rows: &[u32]) -> Vec<f64> {
        let mut stats = vec![0.0; self.objective.width()];
        for &r in rows {
            self.objective.accumulate(&mut stats, r as usize, self.row_weight(r));
        }
        stats
    }

    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> TreeNode {
        let stats = self.node_stats(&rows);
        let weight = self.objective.weight(&stats);
        let cfg = &self.builder.config;
        let make_leaf = |objective: &O| TreeNode::Leaf {
            value: objective.leaf(&stats),
            n_samples: weight as u64,
        };
        if cfg.max_depth.is_some_and(|d| depth >= d)
            || weight < 2.0 * cfg.min_leaf as f64
            || self.n_features == 0
            || self.objective.is_pure(&stats, &rows)
        {
            return make_leaf(self.objective);
        }

        let features: Vec<usize> = if self.n_candidates >= self.n_features {
            (0..self.n_features).collect()
        } else {
            let mut f = index::sample(&mut self.rng, self.n_features, self.n_candidates).into_vec();
            f.sort_unstable();
            f
        };

        let best = match self.find_best(&features, &rows, &stats) {
            Some(b) if self.objective.improves(&stats, &b.score) => b,
            _ => return make_leaf(self.objective),
        };

        let (impurity_decrease, gain) = self.objective.describe(&stats, &best.score);
        let column = &self.builder.columns[best.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.iter().partition(|&&r| column[r as usize] <= best.threshold);
        drop(rows);
        let split = SplitCandidate {
            feature_index: best.feature,
            threshold: best.threshold,
            impurity_decrease,
            gain,
            left_count: best.left_weight as u64,
            right_count: best.right_weight as u64,
        };
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        TreeNode::Internal {
            split,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn find_best(&self, features: &[usize], rows: &[u32], total: &[f64]) -> Option<Best<O::Score>> {
        let search = |&f: &usize| match &self.builder.binned {
            None => self.best_exact(f, rows, total),
            Some(binned) => self.best_histogram(binned, f, rows, total),
        };
        let per_feature: Vec<Option<Best<O::Score>>> =
            if features.len() > 1 && rows.len() * features.len() >= PARALLEL_WORK {
                features.par_iter().map(search).collect()
            } else {
                features.iter().map(search).collect()
            };
        // Ascending feature order with a strict comparison keeps the lowest
        // feature among equals, exactly as a sequential scan would.
        let mut best: Option<Best<O::Score>> = None;
        for candidate in per_feature.into_iter().flatten() {
            if best
                .as_ref()
                .is_none_or(|b| self.objective.beats(&candidate.score, &b.score))
            {
                best = Some(candidate);
            }
        }
        best
    }

    /// Considers the split after `left`; keeps `best` unless strictly beaten.
    #[inline]
    fn consider(
        &self,
        best: &mut Option<Best<O::Score>>,
        feature: usize,
        threshold: f64,
        left: &[f64],
        right: &mut [f64],
        total: &[f64],
    ) {
        for ((r, t), l) in right.iter_mut().zip(total).zip(left) {
            *r = t - l;
        }
        let min_leaf = self.builder.config.min_leaf as f64;
        let (wl, wr) = (self.objective.weight(left), self.objective.weight(right));
        if wl < min_leaf || wr < min_leaf {
            return;
        }
        let score = self.objective.score(left, right);
        if best.as_ref().is_none_or(|b| self.objective.beats(&score, &b.score)) {
            *best = Some(Best {
                feature,
                threshold,
                score,
                left_weight: wl,
                right_weight: wr,
            });
        }
    }

    fn best_exact(&self, feature: usize, rows: &[u32], total: &[f64]) -> Option<Best<O::Score>> {
        let column = &self.builder.columns[feature];
        let mut pairs: Vec<(f64, u32)> = rows.iter().map(|&r| (column[r as usize], r)).collect();
        // Stable: equal values stay in ascending row order, matching the
        // accumulation order of the histogram path.
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let width = self.objective.width();
        let mut left = vec![0.0; width];
        let mut group = vec![0.0; width];
        let mut right = vec![0.0; width];
        let mut best = None;
        let mut i = 0;
        while i < pairs.len() {
            let value = pairs[i].0;
            group.iter_mut().for_each(|g| *g = 0.0);
            while i < pairs.len() && pairs[i].0 == value {
                let r = pairs[i].1;
                self.objective.accumulate(&mut group, r as usize, self.row_weight(r));
                i += 1;
            }
            for (l, g) in left.iter_mut().zip(&group) {
                *l += g;
            }
            if i < pairs.len() {
                let threshold = midpoint(value, pairs[i].0);
                self.consider(&mut best, feature, threshold, &left, &mut right, total);
            }
        }
        best
    }

    fn best_histogram(
        &self,
        binned: &BinnedColumns,
        feature: usize,
        rows: &[u32],
        total: &[f64],
    ) -> Option<Best<O::Score>> {
        let column = &self.builder.columns[feature];
        let bins = &binned.bins[feature];
        let n_bins = binned.n_bins[feature];
        let width = self.objective.width();
        let mut hist = vec![0.0; n_bins * width];
        let mut lo = vec![f64::INFINITY; n_bins];
        let mut hi = vec![f64::NEG_INFINITY; n_bins];
        for &r in rows {
            let b = bins[r as usize] as usize;
            let v = column[r as usize];
            self.objective
                .accumulate(&mut hist[b * width..(b + 1) * width], r as usize, self.row_weight(r));
            lo[b] = lo[b].min(v);
            hi[b] = hi[b].max(v);
        }

        let occupied: Vec<usize> = (0..n_bins).filter(|&b| lo[b].is_finite()).collect();
        let mut left = vec![0.0; width];
        let mut right = vec![0.0; width];
        let mut best = None;
        for (k, &b) in occupied.iter().enumerate() {
            for (l, h) in left.iter_mut().zip(&hist[b * width..(b + 1) * width]) {
                *l += h;
            }
            if let Some(&next) = occupied.get(k + 1) {
                let threshold = midpoint(hi[b], lo[next]);
                self.consider(&mut best, feature, threshold, &left, &mut right, total);
            }
        }
        best
    }
}
