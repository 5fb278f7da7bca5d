//! Bagging and gradient-boosting ensembles of CART trees, with
//! impurity- and gain-based feature importance.
//!
//! Bagging averages the leaf class distributions of `N` trees grown on
//! bootstrap replicas (soft voting; hard majority voting on request).
//! Boosting keeps one additive score per class: every round fits one
//! regression tree per class to the softmax cross-entropy residual
//! `y_k - p_k` and adds `learning_rate * tree(x)` to that class's score.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClassId, Dataset};
use crate::metrics::{confusion_matrix, macro_f1, ClassReport, MetricsError};
use crate::rng::{derive_seed, seeded_rng};
use crate::trees::{
    argmax, DecisionTree, FeatureSubsample, ImportanceMode, LeafValue, SplitStrategy, Targets, TreeBuilder, TreeConfig,
    TreeError, TreeTask,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no training rows")]
    EmptyInput,
    #[error("training data holds fewer than two classes")]
    SingleClass,
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("expected {expected} sensor values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("dataset sensors {found:?} do not match the model sensors {expected:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("unsupported model format version {0}")]
    UnsupportedFormatVersion(u32),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bagging,
    Boosting,
}

impl Family {
    /// The importance measure conventionally paired with the family.
    pub fn default_importance(self) -> ImportanceMode {
        match self {
            Family::Bagging => ImportanceMode::Mdi,
            Family::Boosting => ImportanceMode::Gain,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Bagging => "bagging",
            Family::Boosting => "boosting",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Voting {
    /// Average leaf distributions, then argmax.
    #[default]
    Soft,
    /// One vote per tree for its leaf's argmax class.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub family: Family,
    pub n_trees: usize,
    /// Shrinkage applied to every boosting tree; ignored by bagging.
    pub learning_rate: f64,
    /// Bootstrap resampling per bagging tree; ignored by boosting.
    pub bootstrap: bool,
    #[serde(default)]
    pub voting: Voting,
    pub tree: TreeConfig,
    pub master_seed: u64,
}

impl EnsembleConfig {
    /// Random-forest style bagging: bootstrap replicas, fully grown trees,
    /// `sqrt(n_sensors)` candidate sensors per node.
    pub fn random_forest() -> Self {
        EnsembleConfig {
            family: Family::Bagging,
            n_trees: 100,
            learning_rate: 1.0,
            bootstrap: true,
            voting: Voting::Soft,
            tree: TreeConfig {
                feature_subsample: FeatureSubsample::Sqrt,
                ..TreeConfig::classification()
            },
            master_seed: 0,
        }
    }

    /// Gradient boosting with exact split search.
    pub fn boosting_exact() -> Self {
        EnsembleConfig {
            family: Family::Boosting,
            n_trees: 100,
            learning_rate: 0.1,
            bootstrap: false,
            voting: Voting::Soft,
            tree: TreeConfig::gradient_learner(),
            master_seed: 0,
        }
    }

    /// Gradient boosting with 255-bin histogram split search.
    pub fn boosting_histogram() -> Self {
        let mut cfg = EnsembleConfig::boosting_exact();
        cfg.tree.split_strategy = SplitStrategy::Histogram { bins: 255 };
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.n_trees == 0 {
            return Err(EnsembleError::InvalidConfig("n_trees must be at least 1".into()));
        }
        let expected_task = match self.family {
            Family::Bagging => TreeTask::Classification,
            Family::Boosting => {
                if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
                    return Err(EnsembleError::InvalidConfig(format!(
                        "learning_rate must be in (0, 1], got {}",
                        self.learning_rate
                    )));
                }
                TreeTask::RegressionOnGradients
            }
        };
        if self.tree.task != expected_task {
            return Err(EnsembleError::InvalidConfig(format!(
                "{} ensembles need {:?} trees",
                self.family, expected_task
            )));
        }
        self.tree.validate()?;
        Ok(())
    }
}

/// A trained ensemble. Boosting trees are stored round by round, one per
/// class within each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format_version: u32,
    pub config: EnsembleConfig,
    pub symbols: Vec<String>,
    pub schema_fingerprint: u64,
    pub class_count: usize,
    /// Initial per-class scores (log class priors); empty for bagging.
    pub base_scores: Vec<f64>,
    pub trees: Vec<DecisionTree>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: ClassId,
    pub probabilities: Vec<f64>,
}

/// Smallest class count used for the log prior of a class that is absent
/// from the training rows.
const ABSENT_CLASS_COUNT: f64 = 0.5;

pub fn fit_ensemble(d: &Dataset, cfg: &EnsembleConfig) -> Result<EnsembleModel, EnsembleError> {
    cfg.validate()?;
    if d.n_rows() == 0 {
        return Err(EnsembleError::EmptyInput);
    }
    let counts = d.class_counts();
    if d.n_classes() < 2 || counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(EnsembleError::SingleClass);
    }
    let builder = TreeBuilder::new(d.columns(), cfg.tree.clone())?;
    let (trees, base_scores) = match cfg.family {
        Family::Bagging => (fit_bagging(d, cfg, &builder)?, Vec::new()),
        Family::Boosting => fit_boosting(d, cfg, &builder, &counts)?,
    };
    Ok(EnsembleModel {
        format_version: MODEL_FORMAT_VERSION,
        config: cfg.clone(),
        symbols: d.symbols(),
        schema_fingerprint: d.fingerprint(),
        class_count: d.n_classes(),
        base_scores,
        trees,
    })
}

/// Each tree draws from its own seed, so the forest does not depend on how
/// trees are scheduled across threads.
fn fit_bagging(
    d: &Dataset,
    cfg: &EnsembleConfig,
    builder: &TreeBuilder<'_>,
) -> Result<Vec<DecisionTree>, EnsembleError> {
    let n = d.n_rows();
    let targets = Targets::Classes {
        labels: d.labels(),
        n_classes: d.n_classes(),
    };
    (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(cfg.master_seed, t as u64);
            let weights = cfg.bootstrap.then(|| {
                let mut rng = seeded_rng(derive_seed(tree_seed, 0));
                let mut w = vec![0u32; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1;
                }
                w
            });
            builder
                .fit(targets, weights.as_deref(), derive_seed(tree_seed, 1))
                .map_err(EnsembleError::from)
        })
        .collect()
}

fn fit_boosting(
    d: &Dataset,
    cfg: &EnsembleConfig,
    builder: &TreeBuilder<'_>,
    counts: &[usize],
) -> Result<(Vec<DecisionTree>, Vec<f64>), EnsembleError> {
    let n = d.n_rows();
    let k = d.n_classes();
    let base_scores: Vec<f64> = counts
        .iter()
        .map(|&c| ((c as f64).max(ABSENT_CLASS_COUNT) / n as f64).ln())
        .collect();
    // Class-major running scores.
    let mut scores: Vec<Vec<f64>> = base_scores.iter().map(|&b| vec![b; n]).collect();
    let mut residuals = vec![vec![0.0; n]; k];
    let mut trees = Vec::with_capacity(cfg.n_trees * k);
    let labels = d.labels();

    for round in 0..cfg.n_trees {
        let probs: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| softmax(&(0..k).map(|c| scores[c][i]).collect::<Vec<_>>()))
            .collect();
        for (c, r) in residuals.iter_mut().enumerate() {
            for i in 0..n {
                let y = if labels[i] as usize == c { 1.0 } else { 0.0 };
                r[i] = y - probs[i][c];
            }
        }
        let round_trees: Vec<DecisionTree> = (0..k)
            .into_par_iter()
            .map(|c| {
                builder.fit(
                    Targets::Gradients(&residuals[c]),
                    None,
                    derive_seed(cfg.master_seed, (round * k + c) as u64),
                )
            })
            .collect::<Result<_, _>>()?;
        scores
            .par_iter_mut()
            .zip(&round_trees)
            .for_each(|(class_scores, tree)| {
                for (i, s) in class_scores.iter_mut().enumerate() {
                    if let LeafValue::Score(v) = tree.leaf_for(|j| d.column(j)[i]) {
                        *s += cfg.learning_rate * v;
                    }
                }
            });
        trees.extend(round_trees);
    }
    Ok((trees, base_scores))
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

impl EnsembleModel {
    pub fn n_features(&self) -> usize {
        self.symbols.len()
    }

    /// Short identifier: family, sensor-set fingerprint and seed.
    pub fn id(&self) -> String {
        format!(
            "{}-{:016x}-s{}",
            self.config.family, self.schema_fingerprint, self.config.master_seed
        )
    }

    /// Accumulated per-class boosting scores `base + Σ η·tree(x)`.
    /// For bagging, the averaged (soft) or vote-share (hard) distribution.
    pub fn decision_scores(&self, value: impl Fn(usize) -> f64 + Copy) -> Vec<f64> {
        let k = self.class_count;
        match self.config.family {
            Family::Boosting => {
                let mut scores = self.base_scores.clone();
                if scores.len() != k {
                    scores = vec![0.0; k];
                }
                for (t, tree) in self.trees.iter().enumerate() {
                    if let LeafValue::Score(v) = tree.leaf_for(value) {
                        scores[t % k] += self.config.learning_rate * v;
                    }
                }
                scores
            }
            Family::Bagging => {
                let mut acc = vec![0.0; k];
                for tree in &self.trees {
                    if let LeafValue::Distribution(p) = tree.leaf_for(value) {
                        match self.config.voting {
                            Voting::Soft => acc.iter_mut().zip(p).for_each(|(a, &x)| *a += x),
                            Voting::Hard => acc[argmax(p)] += 1.0,
                        }
                    }
                }
                let n = self.trees.len() as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                acc
            }
        }
    }

    fn predict_with(&self, value: impl Fn(usize) -> f64 + Copy) -> Prediction {
        let scores = self.decision_scores(value);
        let class = argmax(&scores) as ClassId;
        let probabilities = match self.config.family {
            Family::Boosting => softmax(&scores),
            Family::Bagging => scores,
        };
        Prediction { class, probabilities }
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction, EnsembleError> {
        if row.len() != self.n_features() {
            return Err(EnsembleError::DimensionMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFiniteInput);
        }
        Ok(self.predict_with(|j| row[j]))
    }

    pub fn check_schema(&self, d: &Dataset) -> Result<(), EnsembleError> {
        if d.fingerprint() != self.schema_fingerprint || d.symbols() != self.symbols {
            return Err(EnsembleError::SchemaMismatch {
                expected: self.symbols.clone(),
                found: d.symbols(),
            });
        }
        Ok(())
    }

    /// Predicted class of every row. The dataset's sensors must match the
    /// model's, in order.
    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<ClassId>, EnsembleError> {
        self.check_schema(d)?;
        Ok((0..d.n_rows())
            .into_par_iter()
            .map(|i| self.predict_with(|j| d.column(j)[i]).class)
            .collect())
    }

    /// Macro-F1 report on a labelled dataset.
    pub fn evaluate(&self, d: &Dataset) -> Result<ClassReport, EnsembleError> {
        let predicted = self.predict_dataset(d)?;
        let k = self.class_count.max(d.n_classes());
        Ok(macro_f1(&confusion_matrix(d.labels(), &predicted, k)?)?)
    }

    pub fn to_json(&self) -> Result<String, EnsembleError> {
        Ok(crate::io::to_json_pretty(self)?)
    }

    /// Parses a model document, rejecting unknown format versions.
    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = deserialize_deep(text)?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(EnsembleError::UnsupportedFormatVersion(probe.format_version));
        }
        let model: EnsembleModel = deserialize_deep(text)?;
        if model.symbols.len() != model.trees.first().map_or(model.symbols.len(), |t| t.n_features) {
            return Err(EnsembleError::InvalidConfig(
                "tree arity differs from the sensor list".into(),
            ));
        }
        Ok(model)
    }
}

/// Trees nest one JSON object per level, deeper than serde_json's default
/// recursion guard allows for fully grown trees.
fn deserialize_deep<T: serde::de::DeserializeOwned>(text: &str) -> serde_json::Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de)?;
    de.end()?;
    Ok(value)
}

/// Sensors ordered by importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub mode: ImportanceMode,
    pub symbols: Vec<String>,
    pub scores: Vec<f64>,
    /// Sensor indices by descending score; lowest index first on ties.
    pub order: Vec<usize>,
    /// Set when the measure is not the one conventionally paired with the
    /// model family (gain on bagging, impurity on boosting).
    pub cross_paired: bool,
}

impl ImportanceRanking {
    pub fn from_scores(mode: ImportanceMode, symbols: Vec<String>, scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        ImportanceRanking {
            mode,
            symbols,
            scores,
            order,
            cross_paired: false,
        }
    }

    /// Symbols in rank order.
    pub fn ranked_symbols(&self) -> Vec<String> {
        self.order.iter().map(|&i| self.symbols[i].clone()).collect()
    }

    pub fn top(&self, k: usize) -> Vec<String> {
        self.ranked_symbols().into_iter().take(k).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,sensor,score\n");
        for (rank, &i) in self.order.iter().enumerate() {
            out.push_str(&format!("{},{},{:?}\n", rank + 1, self.symbols[i], self.scores[i]));
        }
        out
    }
}

/// Per-sensor importance of a trained model.
///
/// `Mdi` averages per-tree impurity decreases (node-size weighted) over the
/// trees; `Gain` divides each sensor's summed split gain by the total gain
/// of all splits.
pub fn feature_importance(m: &EnsembleModel, mode: ImportanceMode) -> ImportanceRanking {
    let n = m.n_features();
    let mut sums = vec![0.0; n];
    for tree in &m.trees {
        for (s, c) in sums.iter_mut().zip(tree.importance_contributions(mode)) {
            *s += c;
        }
    }
    let scores = match mode {
        ImportanceMode::Mdi | ImportanceMode::MdiUnweighted => {
            let trees = m.trees.len().max(1) as f64;
            sums.into_iter().map(|s| s / trees).collect()
        }
        ImportanceMode::Gain => {
            let total: f64 = sums.iter().sum();
            if total > 0.0 {
                sums.into_iter().map(|s| s / total).collect()
            } else {
                sums
            }
        }
    };
    let mut ranking = ImportanceRanking::from_scores(mode, m.symbols.clone(), scores);
    ranking.cross_paired = matches!(
        (m.config.family, mode),
        (Family::Bagging, ImportanceMode::Gain)
            | (Family::Boosting, ImportanceMode::Mdi | ImportanceMode::MdiUnweighted)
    );
    ranking
}
