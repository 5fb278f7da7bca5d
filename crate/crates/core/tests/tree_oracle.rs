mod common;

use co2fdd::trees::{fit_tree, SplitStrategy, Targets, TreeConfig};
use common::{brute_force_tree, matches_oracle, random_small_table, rng, to_columns};
use proptest::prelude::*;

#[test]
fn exact_search_matches_brute_force_on_small_tables() {
    let mut r = rng(2024);
    for case in 0..500 {
        let (rows, labels, k) = random_small_table(&mut r);
        for min_leaf in [1, 2] {
            let mut cfg = TreeConfig::classification();
            cfg.min_leaf = min_leaf;
            let tree = fit_tree(
                &to_columns(&rows),
                Targets::Classes {
                    labels: &labels,
                    n_classes: k,
                },
                &cfg,
                case,
            )
            .unwrap();
            let data: Vec<(Vec<f64>, u32)> = rows.iter().cloned().zip(labels.iter().copied()).collect();
            let oracle = brute_force_tree(&data, k, min_leaf, None, 0);
            if let Err(e) = matches_oracle(&tree.root, &oracle) {
                panic!("case {case} (min_leaf {min_leaf}) rows {rows:?} labels {labels:?}: {e}");
            }
        }
    }
}

#[test]
fn depth_limited_tree_matches_brute_force() {
    let mut r = rng(77);
    for case in 0..200 {
        let (rows, labels, k) = random_small_table(&mut r);
        let mut cfg = TreeConfig::classification();
        cfg.max_depth = Some(1);
        let tree = fit_tree(
            &to_columns(&rows),
            Targets::Classes {
                labels: &labels,
                n_classes: k,
            },
            &cfg,
            case,
        )
        .unwrap();
        let data: Vec<(Vec<f64>, u32)> = rows.iter().cloned().zip(labels.iter().copied()).collect();
        matches_oracle(&tree.root, &brute_force_tree(&data, k, 1, Some(1), 0)).unwrap();
    }
}

fn table() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u32>)> {
    (5usize..60, 1usize..4).prop_flat_map(|(n, f)| {
        (
            proptest::collection::vec(proptest::collection::vec(0u8..12, f), n),
            proptest::collection::vec(0u32..4, n),
        )
            .prop_map(|(rows, labels)| {
                (
                    rows.into_iter()
                        .map(|r| r.into_iter().map(|v| f64::from(v) * 0.5).collect())
                        .collect(),
                    labels,
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_agrees_with_exact_when_bins_cover_values((rows, labels) in table()) {
        let columns = to_columns(&rows);
        let exact = TreeConfig::classification();
        let mut hist = exact.clone();
        hist.split_strategy = SplitStrategy::Histogram { bins: 16 };
        let targets = Targets::Classes { labels: &labels, n_classes: 4 };
        let a = fit_tree(&columns, targets, &exact, 1).unwrap();
        let b = fit_tree(&columns, targets, &hist, 1).unwrap();
        prop_assert_eq!(a.root, b.root);

        let grads: Vec<f64> = labels.iter().map(|&l| f64::from(l) * 0.37 - 0.5).collect();
        let mut greg = TreeConfig::gradient_learner();
        greg.max_depth = Some(4);
        let mut hreg = greg.clone();
        hreg.split_strategy = SplitStrategy::Histogram { bins: 16 };
        let a = fit_tree(&columns, Targets::Gradients(&grads), &greg, 1).unwrap();
        let b = fit_tree(&columns, Targets::Gradients(&grads), &hreg, 1).unwrap();
        prop_assert_eq!(a.root, b.root);
    }

    #[test]
    fn every_accepted_split_lowers_impurity((rows, labels) in table()) {
        let columns = to_columns(&rows);
        let t = fit_tree(&columns, Targets::Classes { labels: &labels, n_classes: 4 }, &TreeConfig::classification(), 3).unwrap();
        for s in &t.split_log {
            prop_assert!(s.impurity_decrease > 0.0);
            prop_assert!(s.gain > 0.0);
        }
    }

    #[test]
    fn parallel_split_scan_matches_sequential(seed in 0u64..1000) {
        // Large enough that the root scans features in parallel.
        let n = 20_000;
        let mut r = rng(seed);
        use rand::Rng;
        let columns: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| f64::from(r.random_range(0..40u8))).collect()).collect();
        let labels: Vec<u32> = (0..n).map(|i| ((columns[0][i] + columns[3][i]) as u32 / 10) % 3).collect();
        let mut cfg = TreeConfig::classification();
        cfg.max_depth = Some(3);
        let targets = Targets::Classes { labels: &labels, n_classes: 3 };
        let parallel = fit_tree(&columns, targets, &cfg, seed).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let sequential = pool.install(|| fit_tree(&columns, targets, &cfg, seed).unwrap());
        prop_assert_eq!(parallel, sequential);
    }
}
