//! Criterion benchmarks for the hot kernels: the matrix solvers behind the
//! limiting coefficients, the jump sampler, and one full path integration at
//! a mid-ladder mass parameter.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use smallmass::numeric::path_seed;
use smallmass::{
    g_tensor, integrate_full, integrate_limiting, noise_drift_increment, preset, solve_lyapunov,
    TimeGrid,
};
use smallmass_bench::{fixture_measure, fixture_spd};

fn bench_solvers(c: &mut Criterion) {
    let gamma6 = fixture_spd(6);
    let rhs6 = fixture_spd(6) * 0.5;
    c.bench_function("solve_lyapunov_n6", |b| {
        b.iter(|| solve_lyapunov(black_box(&gamma6), black_box(&rhs6)).unwrap())
    });

    let gamma4 = fixture_spd(4);
    c.bench_function("g_tensor_n4", |b| {
        b.iter(|| g_tensor(black_box(&gamma4)).unwrap())
    });
}

fn bench_sampler(c: &mut Criterion) {
    let spec = fixture_measure().unwrap();
    let mut seed = 0u64;
    c.bench_function("sample_jumps_horizon1", |b| {
        b.iter(|| {
            seed = seed.wrapping_add(1);
            spec.sample_jumps(0.0, 1.0, black_box(seed)).unwrap()
        })
    });
}

fn bench_jump_drift(c: &mut Criterion) {
    let (_, coeffs) = preset("sk_state_dependent_gamma").unwrap();
    let mut out = [0.0f64];
    c.bench_function("noise_drift_increment_scalar", |b| {
        b.iter(|| {
            noise_drift_increment(
                &coeffs,
                black_box(0.3),
                black_box(&[0.7]),
                black_box(&[0.1]),
                black_box(&[0.15]),
                &mut out,
            )
            .unwrap();
            out[0]
        })
    });
}

fn bench_paths(c: &mut Criterion) {
    let (model, coeffs) = preset("sk_state_dependent_gamma").unwrap();
    let spec = fixture_measure().unwrap();
    let bc = spec.compensator_drift().unwrap();
    let eps = 0.0625;
    let dt = eps * eps * 0.5;
    let jumps = spec.sample_jumps(0.0, 1.0, path_seed(99, 0)).unwrap();
    let grid = TimeGrid::jump_adapted(0.0, 1.0, dt, &jumps).unwrap();

    c.bench_function("integrate_full_eps_2m4", |b| {
        b.iter(|| {
            integrate_full(
                &model,
                &coeffs,
                black_box(eps),
                &[0.0],
                &[0.0],
                &grid,
                &jumps,
                &bc,
            )
            .unwrap()
        })
    });

    c.bench_function("integrate_limiting_same_grid", |b| {
        b.iter(|| integrate_limiting(&model, &coeffs, &[0.0], &grid, &jumps, &bc).unwrap())
    });
}

criterion_group!(benches, bench_solvers, bench_sampler, bench_jump_drift, bench_paths);
criterion_main!(benches);
