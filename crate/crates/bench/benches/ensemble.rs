use std::hint::black_box;

use co2fdd::ensemble::{fit_ensemble, EnsembleConfig};
use co2fdd::simgen::{generate_dataset, GeneratorConfig};
use co2fdd::trees::SplitStrategy;
use criterion::{criterion_group, criterion_main, Criterion};

fn data(rows: usize, seed: u64) -> co2fdd::Dataset {
    generate_dataset(&GeneratorConfig {
        n_rows: rows,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn training(c: &mut Criterion) {
    let train = data(5_000, 1);
    let mut forest = EnsembleConfig::random_forest().with_trees(20);
    forest.tree.split_strategy = SplitStrategy::Histogram { bins: 255 };
    let boost = EnsembleConfig::boosting_histogram().with_trees(10);

    let mut group = c.benchmark_group("fit_ensemble");
    group.sample_size(10);
    group.bench_function("forest_20", |b| {
        b.iter(|| fit_ensemble(black_box(&train), &forest).unwrap())
    });
    group.bench_function("boosting_10_rounds", |b| {
        b.iter(|| fit_ensemble(black_box(&train), &boost).unwrap())
    });
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let train = data(5_000, 1);
    let test = data(2_000, 2);
    let mut cfg = EnsembleConfig::random_forest().with_trees(50);
    cfg.tree.split_strategy = SplitStrategy::Histogram { bins: 255 };
    let model = fit_ensemble(&train, &cfg).unwrap();
    c.bench_function("predict_2000_rows", |b| {
        b.iter(|| model.predict_dataset(black_box(&test)).unwrap())
    });
}

criterion_group!(benches, training, prediction);
criterion_main!(benches);
