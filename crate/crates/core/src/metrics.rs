//! Confusion matrices and macro-averaged F1.
//!
//! Zero-division convention: a precision, recall or F1 whose denominator is
//! zero is 0. The macro average runs over the classes that occur in the
//! truth or in the predictions; a class absent from both carries no
//! information and is left out, as conventional classification reports do.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ClassId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no labels to evaluate")]
    EmptyInput,
    #[error("label {label} is outside 0..{n_classes}")]
    LabelOutOfRange { label: ClassId, n_classes: usize },
    #[error("confusion matrix has no entries")]
    EmptyMatrix,
    #[error("confusion matrix must be square and non-empty")]
    NotSquare,
}

/// `counts[t][p]`: rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(MetricsError::NotSquare);
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.n_classes())
            .filter(|&t| t != class)
            .map(|t| self.counts[t][class])
            .sum()
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..self.n_classes())
            .filter(|&p| p != class)
            .map(|p| self.counts[class][p])
            .sum()
    }
}

pub fn confusion_matrix(
    true_labels: &[ClassId],
    predicted: &[ClassId],
    n_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if true_labels.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: true_labels.len(),
            predicted: predicted.len(),
        });
    }
    if true_labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if n_classes == 0 {
        return Err(MetricsError::NotSquare);
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in true_labels.iter().zip(predicted) {
        for label in [t, p] {
            if label as usize >= n_classes {
                return Err(MetricsError::LabelOutOfRange { label, n_classes });
            }
        }
        counts[t as usize][p as usize] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: ClassId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: Vec<ClassScore>,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<ClassReport, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let per_class: Vec<ClassScore> = (0..cm.n_classes())
        .filter_map(|i| {
            let tp = cm.true_positives(i);
            let fp = cm.false_positives(i);
            let fn_ = cm.false_negatives(i);
            if tp + fp + fn_ == 0 {
                return None;
            }
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            Some(ClassScore {
                class: i as ClassId,
                precision,
                recall,
                f1,
                support: tp + fn_,
            })
        })
        .collect();
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
    Ok(ClassReport { per_class, macro_f1 })
}

/// Convenience: macro-F1 straight from label vectors.
pub fn macro_f1_score(true_labels: &[ClassId], predicted: &[ClassId], n_classes: usize) -> Result<f64, MetricsError> {
    Ok(macro_f1(&confusion_matrix(true_labels, predicted, n_classes)?)?.macro_f1)
}

impl ClassReport {
    /// One row per class plus a final `macro` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{}\n",
                c.class, c.precision, c.recall, c.f1, c.support
            ));
        }
        let support: u64 = self.per_class.iter().map(|c| c.support).sum();
        out.push_str(&format!("macro,,,{:?},{}\n", self.macro_f1, support));
        out
    }
}
