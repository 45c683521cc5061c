use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpsens::models::{alternating_weights, seeded_random_qdp, tridiagonal_qdp, TrackingMap, TrackingModel};
use dpsens::{
    backward_pass, convexify, dense_kkt_solve, forward_solve, reduced_hessian_gamma, unit_direction, QdpProblem,
    Source,
};

const HORIZONS: [usize; 3] = [20, 80, 320];

fn tracking(n: usize) -> QdpProblem {
    TrackingModel::new(n, 10.0, 1.0, TrackingMap::Exp).unwrap().qdp().unwrap()
}

fn middle(qdp: &QdpProblem) -> dpsens::PerturbationDirection {
    let dims = qdp.dims();
    unit_direction(&dims, Source::Stage(dims.horizon / 2), 0).unwrap()
}

/// Shift, backward pass and forward sweep as the horizon grows.
fn bench_stagewise(c: &mut Criterion) {
    let mut group = c.benchmark_group("stagewise");
    for n in HORIZONS {
        let qdp = tracking(n);
        let conv = convexify(&qdp, 8.1).unwrap();
        let rs = backward_pass(conv.as_problem()).unwrap();
        let l = middle(&qdp);
        group.bench_with_input(BenchmarkId::new("convexify", n), &qdp, |b, q| {
            b.iter(|| convexify(black_box(q), 8.1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("backward_pass", n), &conv, |b, cv| {
            b.iter(|| backward_pass(black_box(cv.as_problem())).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("forward_solve", n), &l, |b, l| {
            b.iter(|| forward_solve(&rs, conv.as_problem(), black_box(l)).unwrap())
        });
    }
    group.finish();
}

/// Dense reduced Hessian and saddle-point solve, the cubic-cost oracles.
fn bench_dense(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense");
    group.sample_size(10);
    for n in [20, 80] {
        let qdp = tridiagonal_qdp(&alternating_weights(n), 1.0, 1.0, 1.0).unwrap();
        let l = middle(&qdp);
        group.bench_with_input(BenchmarkId::new("reduced_hessian_gamma", n), &qdp, |b, q| {
            b.iter(|| reduced_hessian_gamma(black_box(q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dense_kkt_solve", n), &l, |b, l| {
            b.iter(|| dense_kkt_solve(&qdp, black_box(l)).unwrap())
        });
    }
    group.finish();
}

/// Full convexify plus Riccati solve on multi-dimensional random instances.
fn bench_random(c: &mut Criterion) {
    let mut group = c.benchmark_group("random");
    for seed in [1u64, 2, 3] {
        let qdp = seeded_random_qdp(seed, 50, 4, 0.5).unwrap();
        let delta = 0.9 * reduced_hessian_gamma(&qdp).unwrap();
        let l = middle(&qdp);
        let d = qdp.dims();
        let label = format!("N{}_nx{}_nu{}", d.horizon, d.nx, d.nu);
        group.bench_with_input(BenchmarkId::new("convexify_and_solve", label), &l, |b, l| {
            b.iter(|| {
                let conv = convexify(&qdp, delta).unwrap();
                let rs = backward_pass(conv.as_problem()).unwrap();
                forward_solve(&rs, conv.as_problem(), black_box(l)).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_stagewise, bench_dense, bench_random);
criterion_main!(benches);
