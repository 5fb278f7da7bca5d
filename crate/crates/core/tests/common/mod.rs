//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use co2fdd::trees::{LeafValue, TreeNode};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Q = Ratio<i128>;

/// Gini impurity `1 - Σ (c/n)²` in exact rationals.
pub fn gini_exact(counts: &[u64]) -> Q {
    let n: i128 = counts.iter().map(|&c| c as i128).sum();
    let mut g = Q::from_integer(1);
    for &c in counts {
        let p = Q::new(c as i128, n);
        g -= p * p;
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleNode {
    Leaf(Vec<u64>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

fn counts_of(rows: &[(Vec<f64>, u32)], k: usize) -> Vec<u64> {
    let mut c = vec![0; k];
    for (_, l) in rows {
        c[*l as usize] += 1;
    }
    c
}

/// Grows a classification tree by trying every (feature, threshold) pair
/// at every node and scoring each with exact rational Gini decreases.
/// Ties go to the lowest feature, then the lowest threshold.
pub fn brute_force_tree(
    rows: &[(Vec<f64>, u32)],
    k: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    depth: usize,
) -> OracleNode {
    let counts = counts_of(rows, k);
    if max_depth.is_some_and(|d| depth >= d) {
        return OracleNode::Leaf(counts);
    }
    let n = rows.len() as i128;
    let parent = gini_exact(&counts);
    let n_features = rows[0].0.len();
    let mut best: Option<(Q, usize, f64)> = None;
    for f in 0..n_features {
        let mut values: Vec<f64> = rows.iter().map(|(x, _)| x[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let (left, right): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|(x, _)| x[f] <= threshold);
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let nl = left.len() as i128;
            let nr = right.len() as i128;
            let decrease = parent
                - Q::new(nl, n) * gini_exact(&counts_of(&left, k))
                - Q::new(nr, n) * gini_exact(&counts_of(&right, k));
            if best.as_ref().is_none_or(|(b, _, _)| decrease > *b) {
                best = Some((decrease, f, threshold));
            }
        }
    }
    match best {
        Some((decrease, feature, threshold)) if decrease > Q::from_integer(0) => {
            let (left, right): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|(x, _)| x[feature] <= threshold);
            OracleNode::Split {
                feature,
                threshold,
                left: Box::new(brute_force_tree(&left, k, min_leaf, max_depth, depth + 1)),
                right: Box::new(brute_force_tree(&right, k, min_leaf, max_depth, depth + 1)),
            }
        }
        _ => OracleNode::Leaf(counts),
    }
}

/// Structural equality of a trained tree and an oracle tree; leaf
/// distributions must equal the oracle counts divided by the node size.
pub fn matches_oracle(node: &TreeNode, oracle: &OracleNode) -> Result<(), String> {
    match (node, oracle) {
        (
            TreeNode::Leaf {
                value: LeafValue::Distribution(p),
                ..
            },
            OracleNode::Leaf(counts),
        ) => {
            let n: u64 = counts.iter().sum();
            let expected: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            if *p == expected {
                Ok(())
            } else {
                Err(format!("leaf {p:?} != {expected:?}"))
            }
        }
        (
            TreeNode::Internal { split, left, right },
            OracleNode::Split {
                feature,
                threshold,
                left: ol,
                right: or,
            },
        ) => {
            if split.feature_index != *feature || split.threshold != *threshold {
                return Err(format!(
                    "split ({}, {}) != oracle ({feature}, {threshold})",
                    split.feature_index, split.threshold
                ));
            }
            matches_oracle(left, ol)?;
            matches_oracle(right, or)
        }
        (node, oracle) => Err(format!("shape differs: {node:?} vs {oracle:?}")),
    }
}

/// Random ≤ 8 × 2 classification table. Half of the cases draw values from
/// a tiny integer grid so equal-score splits are common.
pub fn random_small_table(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<u32>, usize) {
    let n_rows = rng.random_range(2..=8);
    let k = rng.random_range(2..=3);
    let coarse = rng.random_bool(0.5);
    let rows: Vec<Vec<f64>> = (0..n_rows)
        .map(|_| {
            (0..2)
                .map(|_| {
                    if coarse {
                        f64::from(rng.random_range(0..3u8))
                    } else {
                        f64::from(rng.random_range(-50..50i32)) / 4.0
                    }
                })
                .collect()
        })
        .collect();
    let labels: Vec<u32> = (0..n_rows).map(|_| rng.random_range(0..k as u32)).collect();
    (rows, labels, k)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect()
}

/// Per-class precision/recall/F1 straight from the confusion-matrix
/// definitions, with 0 for any zero denominator, and the plain mean over
/// the listed classes.
pub fn hand_macro_f1(cm: &[Vec<u64>], classes: &[usize]) -> f64 {
    let k = cm.len();
    let mut sum = 0.0;
    for &i in classes {
        let tp = cm[i][i] as f64;
        let fp: f64 = (0..k).filter(|&t| t != i).map(|t| cm[t][i] as f64).sum();
        let fn_: f64 = (0..k).filter(|&p| p != i).map(|p| cm[i][p] as f64).sum();
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sum += f1;
    }
    sum / classes.len() as f64
}
