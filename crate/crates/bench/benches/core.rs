use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use secretary_core::decision::{optimal_decision_numbers, success_probability};
use secretary_core::negdep::{build_subset_log_table, check_submodular, joint_max_probability};
use secretary_core::simulate::run_experiment;
use secretary_core::{BallsBinsModel, Distribution, ExperimentConfig};

fn formula(c: &mut Criterion) {
    let mut group = c.benchmark_group("success_probability");
    for n in [10usize, 100, 1000] {
        let d = optimal_decision_numbers(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| {
            b.iter(|| success_probability(black_box(d.values())).unwrap())
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let dists = vec![
        Distribution::uniform(0.0, 1.0).unwrap(),
        Distribution::exponential(1.0).unwrap(),
        Distribution::uniform(0.0, 5.0).unwrap(),
        Distribution::exponential(0.2).unwrap(),
        Distribution::uniform(0.0, 2.0).unwrap(),
    ];
    let cfg = ExperimentConfig::full_knowledge(dists, 100_000, 1);
    c.bench_function("run_experiment/n5_1e5", |b| b.iter(|| run_experiment(black_box(&cfg)).unwrap()));
}

fn balls_bins(c: &mut Criterion) {
    let model = BallsBinsModel::new(24, 8).unwrap();
    let subset: Vec<usize> = (0..5).collect();
    c.bench_function("joint_max_probability/m24_n8", |b| {
        b.iter(|| joint_max_probability(black_box(&model), &subset, 3).unwrap())
    });
    let small = BallsBinsModel::new(6, 4).unwrap();
    c.bench_function("submodular_check/m6_n4", |b| {
        b.iter(|| check_submodular(&build_subset_log_table(black_box(&small), 2).unwrap()))
    });
}

criterion_group!(benches, formula, experiment, balls_bins);
criterion_main!(benches);
