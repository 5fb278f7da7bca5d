//! Binary CART trees for multiclass classification and for regression on
//! boosting gradients.
//!
//! Splits route `value <= threshold` to the left child. Candidate thresholds
//! are midpoints between consecutive distinct values of the node. Among
//! equally good splits the lowest feature index wins, then the lowest
//! threshold; classification scores are compared in exact integer
//! arithmetic so that the rule is applied to true ties, not rounding noise.

mod binning;
mod grow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClassId, Dataset};

pub use grow::{fit_tree, fit_tree_on, Targets, TreeBuilder};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("no training rows")]
    EmptyInput,
    #[error("node has no samples")]
    EmptyNode,
    #[error("expected {expected} feature values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("tree task {0:?} does not match the supplied targets")]
    TaskMismatch(TreeTask),
    #[error("invalid tree configuration: {0}")]
    InvalidConfig(String),
}

/// Gini impurity `1 - Σ p_i²` of a node with the given class counts.
pub fn gini_impurity(class_counts: &[u64]) -> Result<f64, TreeError> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(TreeError::EmptyNode);
    }
    let total = total as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / total).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Every midpoint between consecutive distinct node values.
    Exact,
    /// Midpoints between consecutive non-empty bins of a global binning.
    Histogram { bins: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeTask {
    Classification,
    RegressionOnGradients,
}

/// How many features each node may consider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    #[default]
    All,
    /// `max(1, floor(sqrt(n_features)))`.
    Sqrt,
    /// Fixed count, capped at the number of features.
    Count(usize),
}

impl FeatureSubsample {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            FeatureSubsample::All => n_features,
            FeatureSubsample::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            FeatureSubsample::Count(m) => m.clamp(1, n_features.max(1)),
        }
        .min(n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub split_strategy: SplitStrategy,
    pub task: TreeTask,
}

impl TreeConfig {
    /// Fully grown classification tree over all features.
    pub fn classification() -> Self {
        TreeConfig {
            max_depth: None,
            min_leaf: 1,
            feature_subsample: FeatureSubsample::All,
            split_strategy: SplitStrategy::Exact,
            task: TreeTask::Classification,
        }
    }

    /// Depth-6 regression tree used as a boosting learner.
    pub fn gradient_learner() -> Self {
        TreeConfig {
            max_depth: Some(6),
            min_leaf: 1,
            feature_subsample: FeatureSubsample::All,
            split_strategy: SplitStrategy::Exact,
            task: TreeTask::RegressionOnGradients,
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_leaf == 0 {
            return Err(TreeError::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if let SplitStrategy::Histogram { bins } = self.split_strategy {
            if !(2..=u16::MAX as usize).contains(&bins) {
                return Err(TreeError::InvalidConfig(format!(
                    "histogram bins must be in 2..=65535, got {bins}"
                )));
            }
        }
        if let FeatureSubsample::Count(0) = self.feature_subsample {
            return Err(TreeError::InvalidConfig(
                "feature_subsample count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// An accepted split. Counts are (bootstrap-weighted) sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature_index: usize,
    pub threshold: f64,
    /// Node-local decrease: Gini for classification, mean squared error
    /// for gradient regression.
    pub impurity_decrease: f64,
    /// Total loss reduction, `n_node * impurity_decrease`.
    pub gain: f64,
    pub left_count: u64,
    pub right_count: u64,
}

impl SplitCandidate {
    pub fn n_samples(&self) -> u64 {
        self.left_count + self.right_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafValue {
    /// Class probabilities, summing to one.
    Distribution(Vec<f64>),
    Score(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        split: SplitCandidate,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: LeafValue,
        n_samples: u64,
    },
}

/// One internal node, as consumed by importance aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub feature_index: usize,
    pub impurity_decrease: f64,
    pub gain: f64,
    pub n_samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    /// Impurity decrease weighted by the node's share of the root samples.
    Mdi,
    /// Raw per-split impurity decrease, no node-size weighting.
    MdiUnweighted,
    /// Normalised loss-reduction gain.
    Gain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
    pub config: TreeConfig,
    /// Preorder list of the internal nodes.
    pub split_log: Vec<SplitRecord>,
    pub n_root_samples: u64,
}

/// Output of a single tree.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeOutput<'a> {
    Distribution(&'a [f64]),
    Score(f64),
}

impl DecisionTree {
    /// Builds a tree from an explicit node structure, deriving the split log.
    pub fn from_root(root: TreeNode, n_features: usize, config: TreeConfig) -> Self {
        let mut split_log = Vec::new();
        collect_splits(&root, &mut split_log);
        let n_root_samples = match &root {
            TreeNode::Internal { split, .. } => split.n_samples(),
            TreeNode::Leaf { n_samples, .. } => *n_samples,
        };
        DecisionTree {
            root,
            n_features,
            config,
            split_log,
            n_root_samples,
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.split_log.len() + 1
    }

    pub fn depth(&self) -> usize {
        fn depth(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    /// Leaf reached by a row whose feature `j` is `value(j)`. No validation.
    #[inline]
    pub fn leaf_for(&self, value: impl Fn(usize) -> f64) -> &LeafValue {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Internal { split, left, right } => {
                    node = if value(split.feature_index) <= split.threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<TreeOutput<'_>, TreeError> {
        if row.len() != self.n_features {
            return Err(TreeError::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(TreeError::NonFiniteInput);
        }
        Ok(match self.leaf_for(|j| row[j]) {
            LeafValue::Distribution(p) => TreeOutput::Distribution(p),
            LeafValue::Score(s) => TreeOutput::Score(*s),
        })
    }

    /// Argmax of the leaf distribution (lowest class on ties); `None` for
    /// regression trees.
    pub fn predict_class(&self, row: &[f64]) -> Result<Option<ClassId>, TreeError> {
        Ok(match self.predict(row)? {
            TreeOutput::Distribution(p) => Some(argmax(p) as ClassId),
            TreeOutput::Score(_) => None,
        })
    }

    /// Per-feature sum of the split log under `mode`. Zero for unused features.
    pub fn importance_contributions(&self, mode: ImportanceMode) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for s in &self.split_log {
            out[s.feature_index] += match mode {
                ImportanceMode::Mdi => s.impurity_decrease * s.n_samples as f64 / self.n_root_samples as f64,
                ImportanceMode::MdiUnweighted => s.impurity_decrease,
                ImportanceMode::Gain => s.gain,
            };
        }
        out
    }
}

pub fn predict_tree<'a>(tree: &'a DecisionTree, row: &[f64]) -> Result<TreeOutput<'a>, TreeError> {
    tree.predict(row)
}

pub fn tree_importance_contributions(tree: &DecisionTree, mode: ImportanceMode) -> Vec<f64> {
    tree.importance_contributions(mode)
}

fn collect_splits(node: &TreeNode, out: &mut Vec<SplitRecord>) {
    if let TreeNode::Internal { split, left, right } = node {
        out.push(SplitRecord {
            feature_index: split.feature_index,
            impurity_decrease: split.impurity_decrease,
            gain: split.gain,
            n_samples: split.n_samples(),
        });
        collect_splits(left, out);
        collect_splits(right, out);
    }
}

/// Index of the largest value; the first one on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Convenience for whole-dataset class predictions.
pub fn predict_dataset(tree: &DecisionTree, d: &Dataset) -> Result<Vec<Option<ClassId>>, TreeError> {
    if d.n_sensors() != tree.n_features {
        return Err(TreeError::DimensionMismatch {
            expected: tree.n_features,
            got: d.n_sensors(),
        });
    }
    Ok((0..d.n_rows())
        .map(|i| match tree.leaf_for(|j| d.column(j)[i]) {
            LeafValue::Distribution(p) => Some(argmax(p) as ClassId),
            LeafValue::Score(_) => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gini_hand_values() {
        assert_eq!(gini_impurity(&[5, 0]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[5, 5]).unwrap(), 0.5);
        assert!((gini_impurity(&[2, 2, 2]).unwrap() - 2.0 / 3.0).abs() <= 1e-15);
        assert_eq!(gini_impurity(&[0, 0]), Err(TreeError::EmptyNode));
    }

    fn leaf(p: Vec<f64>, n: u64) -> Box<TreeNode> {
        Box::new(TreeNode::Leaf {
            value: LeafValue::Distribution(p),
            n_samples: n,
        })
    }

    fn split(feature: usize, threshold: f64, dec: f64, l: u64, r: u64) -> SplitCandidate {
        SplitCandidate {
            feature_index: feature,
            threshold,
            impurity_decrease: dec,
            gain: dec * (l + r) as f64,
            left_count: l,
            right_count: r,
        }
    }

    /// Root splits feature 1 (10 rows, ΔI 0.3); left child splits feature 0
    /// (6 rows, ΔI 0.2).
    fn two_split_tree() -> DecisionTree {
        let root = TreeNode::Internal {
            split: split(1, 0.5, 0.3, 6, 4),
            left: Box::new(TreeNode::Internal {
                split: split(0, 2.0, 0.2, 3, 3),
                left: leaf(vec![1.0, 0.0], 3),
                right: leaf(vec![0.0, 1.0], 3),
            }),
            right: leaf(vec![0.25, 0.75], 4),
        };
        DecisionTree::from_root(root, 3, TreeConfig::classification())
    }

    #[test]
    fn contributions_of_hand_built_tree() {
        let t = two_split_tree();
        assert_eq!(t.split_log.len(), 2);
        assert_eq!(t.n_root_samples, 10);
        // Weighted: 0.3 * 10/10 for feature 1, 0.2 * 6/10 for feature 0.
        let mdi = t.importance_contributions(ImportanceMode::Mdi);
        assert!((mdi[0] - 0.12).abs() < 1e-15);
        assert!((mdi[1] - 0.3).abs() < 1e-15);
        assert_eq!(mdi[2], 0.0);
        let raw = t.importance_contributions(ImportanceMode::MdiUnweighted);
        assert_eq!(raw, vec![0.2, 0.3, 0.0]);
        let gain = t.importance_contributions(ImportanceMode::Gain);
        assert!((gain[0] - 1.2).abs() < 1e-12 && (gain[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_leaf_contributes_nothing() {
        let t = DecisionTree::from_root(*leaf(vec![1.0], 4), 2, TreeConfig::classification());
        assert_eq!(t.importance_contributions(ImportanceMode::Mdi), vec![0.0, 0.0]);
        assert_eq!(t.predict(&[9.0, -9.0]).unwrap(), TreeOutput::Distribution(&[1.0]));
    }

    #[test]
    fn routing_and_input_checks() {
        let t = two_split_tree();
        assert_eq!(t.predict_class(&[1.0, 0.5, 0.0]).unwrap(), Some(0));
        assert_eq!(t.predict_class(&[3.0, 0.4, 0.0]).unwrap(), Some(1));
        assert_eq!(t.predict_class(&[0.0, 0.6, 0.0]).unwrap(), Some(1));
        assert_eq!(
            t.predict(&[0.0, 1.0]),
            Err(TreeError::DimensionMismatch { expected: 3, got: 2 })
        );
        assert_eq!(t.predict(&[f64::NAN, 1.0, 0.0]), Err(TreeError::NonFiniteInput));
    }

    #[test]
    fn histogram_bins_validated() {
        let mut cfg = TreeConfig::classification();
        cfg.split_strategy = SplitStrategy::Histogram { bins: 1 };
        assert!(cfg.validate().is_err());
        cfg.split_strategy = SplitStrategy::Histogram { bins: 2 };
        assert!(cfg.validate().is_ok());
    }

    proptest! {
        #[test]
        fn gini_is_symmetric_and_bounded(mut counts in proptest::collection::vec(0u64..50, 1..6)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let g = gini_impurity(&counts).unwrap();
            let k = counts.len() as f64;
            prop_assert!(g >= 0.0 && g <= 1.0 - 1.0 / k + 1e-12);
            counts.reverse();
            prop_assert!((gini_impurity(&counts).unwrap() - g).abs() < 1e-15);
            let uniform = vec![7u64; counts.len()];
            prop_assert!(gini_impurity(&uniform).unwrap() + 1e-12 >= g);
        }
    }
}
