use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use lochar_core::model::{haar_random_unitary, LossDiagonal, TransferMatrix};
use lochar_core::moduli::{sinkhorn_decompose, SinkhornOptions};
use lochar_core::phases::{
    all_output_pairs, estimate_correlations, refine_phases, solve_phases, CorrelationSet,
};
use lochar_core::phases::{RefineOptions, SolveOptions};
use lochar_core::pipeline::{run_pipeline, PipelineConfig};
use lochar_core::simulator::{intensity_matrix, simulate_two_beam, NoiseModel};

fn lossy(n: usize, seed: u64) -> TransferMatrix {
    let d: Vec<f64> = (0..n)
        .map(|i| 0.5 + 0.5 * ((i * 7 % n) as f64 / n as f64))
        .collect();
    TransferMatrix::new(
        haar_random_unitary(n, seed).unwrap(),
        LossDiagonal::from_intensity(&d).unwrap(),
        LossDiagonal::from_intensity(&d).unwrap(),
    )
    .unwrap()
}

fn bench_haar(c: &mut Criterion) {
    let mut group = c.benchmark_group("haar_random_unitary");
    for n in [4, 16] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| haar_random_unitary(black_box(n), 7).unwrap())
        });
    }
    group.finish();
}

fn bench_sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn_decompose");
    for n in [4, 16] {
        let m = intensity_matrix(&lossy(n, 3), &NoiseModel::default(), 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| sinkhorn_decompose(black_box(m), &SinkhornOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_correlations(c: &mut Criterion) {
    let t = lossy(3, 5);
    let series = simulate_two_beam(&t, 0, 1, &NoiseModel::default(), 10_000, 2).unwrap();
    let pairs = all_output_pairs(3);
    c.bench_function("estimate_correlations/3x10000", |b| {
        b.iter(|| estimate_correlations(black_box(&series), &pairs).unwrap())
    });
}

fn bench_phases(c: &mut Criterion) {
    let t = lossy(3, 5);
    let mut set = CorrelationSet::new();
    for (h, k) in all_output_pairs(3) {
        let series =
            simulate_two_beam(&t, h, k, &NoiseModel::default(), 10_000, (h * 3 + k) as u64)
                .unwrap();
        set.extend(estimate_correlations(&series, &all_output_pairs(3)).unwrap());
    }
    let p = t.unitary.probabilities();
    c.bench_function("solve_phases/3", |b| {
        b.iter(|| solve_phases(black_box(&set), &p, &SolveOptions::default()).unwrap())
    });
    let initial = solve_phases(&set, &p, &SolveOptions::default()).unwrap();
    c.bench_function("refine_phases/3", |b| {
        b.iter(|| refine_phases(black_box(&initial), &set, &RefineOptions::default()).unwrap())
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let cfg = PipelineConfig::default();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("default_chip", |b| {
        b.iter(|| run_pipeline(black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_haar,
    bench_sinkhorn,
    bench_correlations,
    bench_phases,
    bench_pipeline
);
criterion_main!(benches);
