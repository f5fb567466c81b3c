use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sortnet::data::{load_csv, stratified_split, Dataset};
use sortnet::ensemble::{build_ensemble, EnsembleConfig};
use sortnet::network::NetworkConfig;
use sortnet::oracles::run_suite;
use sortnet::Parallelism;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn iris() -> Dataset {
    load_csv(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv")).expect("iris fixture")
}

fn config(ds: &Dataset) -> EnsembleConfig {
    EnsembleConfig {
        embed_dim: 16,
        network: NetworkConfig {
            hidden_sizes: vec![64],
            classes: ds.classes(),
            iterations: 200,
            ..NetworkConfig::default()
        },
        ..EnsembleConfig::default()
    }
}

fn training(c: &mut Criterion) {
    let ds = iris();
    let (train, _) = stratified_split(&ds, 0.2, 0).unwrap();
    let cfg = config(&ds);
    let mut g = c.benchmark_group("build_ensemble");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_ensemble(&cfg, &train.x, &train.y, mode).unwrap())
        });
    }
    g.finish();
}

fn prediction(c: &mut Criterion) {
    let ds = iris();
    let (train, _) = stratified_split(&ds, 0.2, 0).unwrap();
    let (model, _) = build_ensemble(&config(&ds), &train.x, &train.y, Parallelism::Parallel).unwrap();
    let mut g = c.benchmark_group("predict_batch");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| model.predict_batch(&ds.x, mode).unwrap()));
    }
    g.finish();
}

fn oracles(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle_suite");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_suite(7, mode).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, training, prediction, oracles);
criterion_main!(benches);
