//! Shared fixtures for the kernel benchmarks: deterministic matrices and a
//! standard jump-measure specification, so every benchmark measures the same
//! well-defined workload.

use nalgebra::DMatrix;
use smallmass::{LevyMeasureSpec, MarkLaw, MeasureKind, Result};

pub use nalgebra;

/// Deterministic SPD matrix `A Aᵀ + 0.3 I` with trigonometric entries, the
/// same shape of input the solvers see from random-friction tests.
pub fn fixture_spd(n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| ((7 * i + 3 * j + 1) as f64).sin());
    &a * a.transpose() + DMatrix::identity(n, n) * 0.3
}

/// The standard benchmark measure: compound Poisson, intensity 2, uniform
/// marks on `[-0.15, 0.2]`.
pub fn fixture_measure() -> Result<LevyMeasureSpec> {
    LevyMeasureSpec::new(
        MeasureKind::FiniteActivity,
        2.0,
        MarkLaw::Uniform { lo: -0.15, hi: 0.2 },
        0.0,
    )
}
