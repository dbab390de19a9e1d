//! Cross-validation of independently implemented computation routes.
//!
//! The Green tensor has two routes: the spectral formula (production) and
//! matrix-exponential quadrature (verification). Mark-law moments also have
//! two: closed-form/deterministic quadrature versus Monte Carlo sampling.
//! These tests drive both sides of each pair over randomized inputs and
//! require agreement, so a defect in either route surfaces as disagreement.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallmass::{g_tensor, g_tensor_quadrature, solve_lyapunov, LevyMeasureSpec, MarkLaw, MeasureKind};

/// Random symmetric positive-definite matrix with eigenvalues in
/// `[0.5, 0.5 + spread]`.
fn random_spd(n: usize, spread: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = raw.qr().q();
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        rng.gen_range(0.5..0.5 + spread)
    }));
    let m = &q * lambda * q.transpose();
    // Symmetrize away roundoff.
    (&m + m.transpose()) * 0.5
}

#[test]
fn test_g_tensor_routes_agree_on_random_spd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(31415);
    let mut checked = 0usize;
    for trial in 0..100 {
        let n = 1 + trial % 4;
        let gamma = random_spd(n, 4.0, &mut rng);
        let spectral = g_tensor(&gamma).expect("spectral route");
        let quad = g_tensor_quadrature(&gamma, 1e-10).expect("quadrature route");
        for (a, b) in spectral.values().iter().zip(quad.values().iter()) {
            let scale = a.abs().max(b.abs()).max(1e-3);
            assert!(
                (a - b).abs() <= 1e-7 * scale,
                "trial {trial} (n = {n}): spectral {a} vs quadrature {b}"
            );
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn test_lyapunov_solution_satisfies_equation_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for trial in 0..100 {
        let n = 1 + trial % 5;
        let gamma = random_spd(n, 6.0, &mut rng);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let c = (&raw + raw.transpose()) * 0.5;
        let x = solve_lyapunov(&gamma, &c).expect("solve");
        let residual = &gamma * &x + &x * &gamma - &c;
        let scale = c.norm().max(1.0);
        assert!(
            residual.norm() <= 1e-12 * scale,
            "trial {trial} (n = {n}): residual norm {}",
            residual.norm()
        );
    }
}

#[test]
fn test_g_tensor_contraction_solves_lyapunov_equation() {
    // For any SPD gamma and symmetric C, the contraction
    // X_{jh} = G[j,h,a,b] C_{ab} must solve gamma X + X gamma = C.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..50 {
        let n = 2 + trial % 3;
        let gamma = random_spd(n, 3.0, &mut rng);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let c = (&raw + raw.transpose()) * 0.5;
        let tensor = g_tensor(&gamma).unwrap();
        let c_flat: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| c[(i, j)])
            .collect();
        let x_flat = tensor.contract_matrix(&c_flat).unwrap();
        let x = DMatrix::from_fn(n, n, |i, j| x_flat[i * n + j]);
        let residual = &gamma * &x + &x * &gamma - &c;
        assert!(
            residual.norm() <= 1e-10 * c.norm().max(1.0),
            "trial {trial}: contraction does not solve the Lyapunov equation"
        );
    }
}

#[test]
fn test_pareto_moment_quadrature_matches_monte_carlo() {
    // Independent routes for integral |x|^r nu(dx): deterministic
    // quadrature of the density versus direct sampling of the law.
    let spec = LevyMeasureSpec::new(
        MeasureKind::TruncatedInfiniteActivity,
        1.0,
        MarkLaw::TwoSidedPareto {
            tail_index: 2.5,
            inner: 0.2,
            outer: 8.0,
        },
        0.2,
    )
    .unwrap();
    let quad = spec.moment(2.0).unwrap();

    let jumps = spec.sample_jumps(0.0, 200_000.0, 424242).unwrap();
    let n = jumps.events.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for e in &jumps.events {
        let v = e.mark[0] * e.mark[0];
        sum += v;
        sum_sq += v * v;
    }
    let mc = sum / n;
    let se = ((sum_sq / n - mc * mc) / n).sqrt();
    assert!(
        (mc - quad).abs() <= 4.0 * se,
        "quadrature {quad} vs Monte Carlo {mc} (se {se})"
    );
}
