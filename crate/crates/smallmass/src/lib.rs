//! Simulation and analysis of the small-mass (overdamped) limit of Langevin
//! systems driven by pure-jump Levy noise.
//!
//! # Model
//!
//! The library simulates the fast–slow Hamiltonian system with friction
//!
//! ```text
//! dq = grad_p H(t, q, p) dt
//! dp = [ -gamma(t, q) grad_p H - grad_q H + F(t, x) ] dt + sigma(t, x-) dL
//! ```
//!
//! where `H(t, q, p) = K(eps, t, q, p / sqrt(eps)) + V(t, q)` carries the
//! small mass `eps` through a rescaled kinetic energy `K`, and `L` is a
//! pure-jump Levy process with finite-moment measure `nu` (compound Poisson
//! after truncation), decomposed pathwise as jumps minus the constant
//! compensator drift `b_c = integral_{|x|<1} x nu(dx)`.
//!
//! As `eps -> 0` the position component homogenizes to the reduced jump SDE
//!
//! ```text
//! dq = gamma^{-1} [ -grad_q V - grad_q K|_{z=0} + F ] dt
//!      - gamma^{-1} sigma b_c dt
//!      + { gamma^{-1} sigma z + S(t, q, z) } per jump of size z,
//! ```
//!
//! where the jump-induced drift correction
//! `S_i = d/dq_h (gamma^{-1})_i^j G_jh^ab (sigma z)_a (sigma z)_b` involves
//! the friction Green tensor `G = integral_0^inf exp(-y gamma) (x)
//! exp(-y gamma) dy`. The crate provides the noise model ([`levy`]), the
//! Hamiltonian/coefficient model ([`model`]), the Lyapunov/Green-tensor
//! solvers ([`lyapunov`]), jump-adapted integrators for both the full and
//! the reduced dynamics together with the pathwise remainder decomposition
//! ([`integrate`]), and ensemble statistics with convergence-rate fits
//! ([`analysis`]).
//!
//! # Conventions
//!
//! * States are flat `&[f64]` slices; matrices are row-major unless a
//!   `nalgebra` type is used explicitly.
//! * The friction derivative tensor `dgamma_dq` uses layout
//!   `out[h*n*n + i*n + j] = d gamma_ij / d q_h`.
//! * All randomness flows through explicit `u64` seeds; ensemble runs derive
//!   per-path seeds with [`numeric::path_seed`] so results are independent of
//!   thread scheduling.

// Validation deliberately writes `!(x > 0.0)` rather than `x <= 0.0`: the
// negated form is true for NaN, which must be rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod integrate;
pub mod levy;
pub mod lyapunov;
pub mod model;
pub mod numeric;
pub mod quadrature;

pub use analysis::{
    beta_exponent, fit_rate, k_moment_exponent, moment_of_sups, p_sup_exponent,
    probability_exceed, sup_moment_estimator, MomentEstimate, QuantityTag, RateFit, SweepResult,
};
pub use error::{Error, Result};
pub use integrate::{
    integrate_full, integrate_limiting, noise_drift_increment, remainder_path, FullState,
    FullStepper, ReducedPath, ReducedStepper, SystemPath, TimeGrid, BLOWUP_THRESHOLD,
};
pub use levy::{JumpEvent, JumpRealization, LevyMeasureSpec, MarkLaw, MeasureKind};
pub use lyapunov::{g_tensor, g_tensor_quadrature, matrix_exponential, solve_lyapunov, GTensor};
pub use model::{preset, CoefficientSet, HamiltonianModel, PRESET_NAMES};
