//! Majority-class undersampling and train/test splitting.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset, DatasetError};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndersampleTarget {
    /// Shrink the majority class to the size of the largest other class.
    #[default]
    MatchLargestMinority,
    /// Shrink the majority class to exactly `n` rows.
    Explicit(usize),
}

/// Subsamples the majority class without replacement, keeping every other
/// row verbatim. Survivors keep their original relative order.
///
/// The majority class is the one with the most rows, lowest id on ties.
pub fn undersample_majority(d: &Dataset, target: UndersampleTarget, seed: u64) -> Result<Dataset, DatasetError> {
    let counts = d.class_counts();
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(DatasetError::SingleClass);
    }
    let majority = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(class, _)| class)
        .expect("at least two classes");
    let available = counts[majority];
    let keep = match target {
        UndersampleTarget::MatchLargestMinority => counts
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != majority)
            .map(|(_, &n)| n)
            .max()
            .unwrap_or(0),
        UndersampleTarget::Explicit(n) => {
            if n > available {
                return Err(DatasetError::TargetTooLarge {
                    requested: n,
                    available,
                });
            }
            n
        }
    };

    let majority_rows: Vec<usize> = (0..d.n_rows())
        .filter(|&i| d.labels()[i] as usize == majority)
        .collect();
    let mut rng = seeded_rng(seed);
    let mut retained = vec![false; majority_rows.len()];
    for k in index::sample(&mut rng, majority_rows.len(), keep) {
        retained[k] = true;
    }
    let mut next_majority = 0;
    let rows: Vec<usize> = (0..d.n_rows())
        .filter(|&i| {
            if d.labels()[i] as usize == majority {
                let keep_row = retained[next_majority];
                next_majority += 1;
                keep_row
            } else {
                true
            }
        })
        .collect();
    Ok(d.select_rows(&rows))
}

/// Disjoint, exhaustive partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
}

/// Splits rows into train and test sets. Both sides keep the source row
/// order.
///
/// Unstratified: `round(fraction * n)` shuffled rows go to train.
/// Stratified: each class contributes `round(fraction * count)` rows,
/// clamped so that every class appears on both sides.
pub fn split_train_test(
    d: &Dataset,
    train_fraction: f64,
    stratified: bool,
    seed: u64,
) -> Result<SplitPair, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::DegenerateFraction(train_fraction));
    }
    let mut rng = seeded_rng(seed);
    let mut in_train = vec![false; d.n_rows()];

    if stratified {
        let counts = d.class_counts();
        if let Some((class, &count)) = counts.iter().enumerate().find(|&(_, &c)| c == 1) {
            return Err(DatasetError::ClassTooSmall {
                class: class as ClassId,
                count,
            });
        }
        for (class, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let mut rows: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels()[i] as usize == class).collect();
            rows.shuffle(&mut rng);
            let n_train = ((train_fraction * count as f64).round() as usize).clamp(1, count - 1);
            for &i in &rows[..n_train] {
                in_train[i] = true;
            }
        }
    } else {
        let n = d.n_rows();
        let n_train = (train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train >= n {
            return Err(DatasetError::DegenerateFraction(train_fraction));
        }
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        for &i in &rows[..n_train] {
            in_train[i] = true;
        }
    }

    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) = (0..d.n_rows()).partition(|&i| in_train[i]);
    Ok(SplitPair {
        train: d.select_rows(&train_rows),
        test: d.select_rows(&test_rows),
        seed,
        train_fraction,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SensorMeta;
    use proptest::prelude::*;

    /// One sensor whose value is the row index, so rows are traceable.
    fn indexed(labels: Vec<ClassId>) -> Dataset {
        let n = labels.len();
        let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
        Dataset::new(
            vec![SensorMeta::inferred("idx")],
            vec![(0..n).map(|i| i as f64).collect()],
            labels,
            n_classes,
        )
        .unwrap()
    }

    fn labels_with_counts(counts: &[usize]) -> Vec<ClassId> {
        // Interleave classes so the majority is not contiguous.
        let mut remaining = counts.to_vec();
        let mut out = Vec::new();
        while remaining.iter().any(|&c| c > 0) {
            for (class, r) in remaining.iter_mut().enumerate() {
                if *r > 0 {
                    out.push(class as ClassId);
                    *r -= 1;
                }
            }
        }
        out
    }

    #[test]
    fn undersample_matches_largest_minority() {
        let d = indexed(labels_with_counts(&[1000, 100, 90]));
        let u = undersample_majority(&d, UndersampleTarget::MatchLargestMinority, 3).unwrap();
        assert_eq!(u.class_counts(), vec![100, 100, 90]);
    }

    #[test]
    fn undersample_keeps_minorities_and_order() {
        let d = indexed(labels_with_counts(&[456, 91, 89, 91, 91, 91, 91]));
        let u = undersample_majority(&d, UndersampleTarget::MatchLargestMinority, 11).unwrap();
        assert_eq!(u.class_counts(), vec![91, 91, 89, 91, 91, 91, 91]);
        let idx = u.column(0);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        for (k, &i) in idx.iter().enumerate() {
            assert_eq!(u.labels()[k], d.labels()[i as usize]);
        }
        let again = undersample_majority(&d, UndersampleTarget::MatchLargestMinority, 11).unwrap();
        assert_eq!(u, again);
    }

    #[test]
    fn undersample_errors() {
        let single = indexed(vec![0, 0, 0]);
        assert!(matches!(
            undersample_majority(&single, UndersampleTarget::MatchLargestMinority, 0),
            Err(DatasetError::SingleClass)
        ));
        let d = indexed(labels_with_counts(&[5, 2]));
        assert!(matches!(
            undersample_majority(&d, UndersampleTarget::Explicit(6), 0),
            Err(DatasetError::TargetTooLarge {
                requested: 6,
                available: 5
            })
        ));
        let u = undersample_majority(&d, UndersampleTarget::Explicit(3), 0).unwrap();
        assert_eq!(u.class_counts(), vec![3, 2]);
    }

    #[test]
    fn unstratified_split_sizes() {
        let d = indexed(labels_with_counts(&[4, 4]));
        let s = split_train_test(&d, 0.75, false, 1).unwrap();
        assert_eq!((s.train.n_rows(), s.test.n_rows()), (6, 2));
    }

    #[test]
    fn large_split_arithmetic() {
        // Row counts of the recorded campaign after rebalancing.
        let n = 554_295usize;
        let n_train = (0.75 * n as f64).round() as usize;
        assert_eq!((n_train, n - n_train), (415_721, 138_574));
    }

    #[test]
    fn stratified_split_of_small_class() {
        let d = indexed(labels_with_counts(&[100, 4]));
        let s = split_train_test(&d, 0.75, true, 9).unwrap();
        assert_eq!(s.train.class_counts(), vec![75, 3]);
        assert_eq!(s.test.class_counts(), vec![25, 1]);
    }

    #[test]
    fn stratified_share_rule_matches_enumeration() {
        // Every count from 2..=40 at several fractions: the train share must
        // be within one row of fraction * count and leave both sides nonempty.
        for count in 2..=40usize {
            for &fraction in &[0.05, 0.25, 0.5, 0.75, 0.95] {
                let d = indexed(labels_with_counts(&[count, 2]));
                let s = split_train_test(&d, fraction, true, count as u64).unwrap();
                let got = s.train.class_counts()[0];
                assert!((got as f64 - fraction * count as f64).abs() <= 1.0);
                assert!(got >= 1 && got < count);
            }
        }
    }

    #[test]
    fn split_errors() {
        let d = indexed(labels_with_counts(&[4, 1]));
        assert!(matches!(
            split_train_test(&d, 1.0, false, 0),
            Err(DatasetError::DegenerateFraction(_))
        ));
        assert!(matches!(
            split_train_test(&d, 0.0, false, 0),
            Err(DatasetError::DegenerateFraction(_))
        ));
        assert!(matches!(
            split_train_test(&d, 0.75, true, 0),
            Err(DatasetError::ClassTooSmall { class: 1, count: 1 })
        ));
    }

    proptest! {
        #[test]
        fn split_is_a_pure_partition(
            counts in proptest::collection::vec(2usize..30, 2..5),
            fraction in 0.1f64..0.9,
            stratified: bool,
            seed: u64,
        ) {
            let d = indexed(labels_with_counts(&counts));
            let s = split_train_test(&d, fraction, stratified, seed).unwrap();
            prop_assert_eq!(s.train.n_rows() + s.test.n_rows(), d.n_rows());
            prop_assert_eq!(s.train.schema(), s.test.schema());
            let mut seen: Vec<f64> = s.train.column(0).iter().chain(s.test.column(0)).copied().collect();
            seen.sort_by(f64::total_cmp);
            let all: Vec<f64> = (0..d.n_rows()).map(|i| i as f64).collect();
            prop_assert_eq!(seen, all);
            let again = split_train_test(&d, fraction, stratified, seed).unwrap();
            prop_assert_eq!(s, again);
        }

        #[test]
        fn undersampling_never_alters_rows(
            counts in proptest::collection::vec(1usize..40, 2..5),
            seed: u64,
        ) {
            let d = indexed(labels_with_counts(&counts));
            let u = undersample_majority(&d, UndersampleTarget::MatchLargestMinority, seed).unwrap();
            for k in 0..u.n_rows() {
                let i = u.column(0)[k] as usize;
                prop_assert_eq!(u.labels()[k], d.labels()[i]);
            }
        }
    }
}
