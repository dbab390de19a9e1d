//! Hamiltonian model and coefficient fields.
//!
//! # Model
//!
//! The full state is `x = (q, p)` in `R^n x R^n` with Hamiltonian
//!
//! ```text
//! H(eps, t, q, p) = K(eps, t, q, p / sqrt(eps)) + V(t, q),
//! ```
//!
//! where the kinetic energy `K(eps, t, q, z)` is expressed in the rescaled
//! momentum `z = p / sqrt(eps)` and must be coercive, `K >= c |z|^eta` for
//! some `eta > 1` outside a bounded set. The coefficient fields are the
//! friction matrix `gamma(t, q)` (symmetric positive definite, independent
//! of `p`), its analytic derivative tensor `dgamma/dq`, an external forcing
//! `F(t, q, p)`, and the noise matrix `sigma(t, q, p)`.
//!
//! Derivatives are supplied analytically by the caller; the library never
//! differentiates numerically inside integrators. [`check_coefficients`]
//! cross-checks the supplied gradients against central finite differences on
//! random probe states, which is how mistakes in hand-coded derivatives are
//! caught early instead of corrupting long runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

type Scalar2 = Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type Grad2 = Box<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type Scalar4 = Box<dyn Fn(f64, f64, &[f64], &[f64]) -> f64 + Send + Sync>;
type Grad4 = Box<dyn Fn(f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
type Field2 = Box<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type Field3 = Box<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Kinetic energy, potential, and their analytic gradients.
pub struct HamiltonianModel {
    n: usize,
    eta: f64,
    kinetic: Scalar4,
    grad_z_kinetic: Grad4,
    grad_q_kinetic: Grad4,
    potential: Scalar2,
    grad_q_potential: Grad2,
}

impl std::fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("n", &self.n)
            .field("eta", &self.eta)
            .finish_non_exhaustive()
    }
}

impl HamiltonianModel {
    /// Build a model from analytic closures.
    ///
    /// * `kinetic(eps, t, q, z)` and its gradients in `z` and `q`;
    /// * `potential(t, q)` and its gradient in `q`;
    /// * `eta`: coercivity exponent of `K` in `|z|`, must exceed 1.
    pub fn new(
        n: usize,
        eta: f64,
        kinetic: Scalar4,
        grad_z_kinetic: Grad4,
        grad_q_kinetic: Grad4,
        potential: Scalar2,
        grad_q_potential: Grad2,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "state dimension must be at least 1"));
        }
        if !(eta > 1.0) || !eta.is_finite() {
            return Err(Error::invalid(
                "eta",
                format!("coercivity exponent must be finite and > 1, got {eta}"),
            ));
        }
        Ok(HamiltonianModel {
            n,
            eta,
            kinetic,
            grad_z_kinetic,
            grad_q_kinetic,
            potential,
            grad_q_potential,
        })
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Coercivity exponent `eta` of the kinetic energy.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Kinetic energy `K(eps, t, q, z)` in the rescaled momentum.
    #[inline]
    pub fn kinetic(&self, eps: f64, t: f64, q: &[f64], z: &[f64]) -> f64 {
        (self.kinetic)(eps, t, q, z)
    }

    /// Gradient of `K` in `z`.
    #[inline]
    pub fn grad_z_kinetic(&self, eps: f64, t: f64, q: &[f64], z: &[f64], out: &mut [f64]) {
        (self.grad_z_kinetic)(eps, t, q, z, out)
    }

    /// Gradient of `K` in `q`.
    #[inline]
    pub fn grad_q_kinetic(&self, eps: f64, t: f64, q: &[f64], z: &[f64], out: &mut [f64]) {
        (self.grad_q_kinetic)(eps, t, q, z, out)
    }

    /// Potential `V(t, q)`.
    #[inline]
    pub fn potential(&self, t: f64, q: &[f64]) -> f64 {
        (self.potential)(t, q)
    }

    /// Gradient of `V` in `q`.
    #[inline]
    pub fn grad_q_potential(&self, t: f64, q: &[f64], out: &mut [f64]) {
        (self.grad_q_potential)(t, q, out)
    }

    /// Kinetic part of the Hamiltonian on the unscaled state:
    /// `K_eps(t, q, p) = K(eps, t, q, p / sqrt(eps))`.
    ///
    /// Convenience for observables; allocates a scratch vector, so hot loops
    /// should rescale `p` themselves and call [`HamiltonianModel::kinetic`].
    pub fn kinetic_energy(&self, eps: f64, t: f64, q: &[f64], p: &[f64]) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        if p.len() != self.n {
            return Err(Error::DimensionMismatch {
                arg: "p",
                got: p.len(),
                need: self.n,
            });
        }
        let root = eps.sqrt();
        let z: Vec<f64> = p.iter().map(|pi| pi / root).collect();
        Ok(self.kinetic(eps, t, q, &z))
    }
}

/// Friction, forcing, and noise coefficient fields.
pub struct CoefficientSet {
    n: usize,
    d: usize,
    friction: Field2,
    dfriction_dq: Field2,
    forcing: Field3,
    noise: Field3,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("n", &self.n)
            .field("d", &self.d)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// Build a coefficient set from analytic closures.
    ///
    /// * `friction(t, q, out)`: `gamma(t, q)`, row-major `n x n`;
    /// * `dfriction_dq(t, q, out)`: derivative tensor with layout
    ///   `out[h*n*n + i*n + j] = d gamma_ij / d q_h`;
    /// * `forcing(t, q, p, out)`: `F`, length `n`;
    /// * `noise(t, q, p, out)`: `sigma`, row-major `n x d`.
    pub fn new(
        n: usize,
        d: usize,
        friction: Field2,
        dfriction_dq: Field2,
        forcing: Field3,
        noise: Field3,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("n,d", "dimensions must be at least 1"));
        }
        Ok(CoefficientSet {
            n,
            d,
            friction,
            dfriction_dq,
            forcing,
            noise,
        })
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Noise dimension `d`.
    pub fn noise_dim(&self) -> usize {
        self.d
    }

    /// Friction matrix `gamma(t, q)` into `out` (row-major `n x n`).
    #[inline]
    pub fn friction(&self, t: f64, q: &[f64], out: &mut [f64]) {
        (self.friction)(t, q, out)
    }

    /// Derivative tensor `d gamma / d q` into `out`
    /// (`out[h*n*n + i*n + j] = d gamma_ij / d q_h`).
    #[inline]
    pub fn dfriction_dq(&self, t: f64, q: &[f64], out: &mut [f64]) {
        (self.dfriction_dq)(t, q, out)
    }

    /// Forcing `F(t, q, p)` into `out` (length `n`).
    #[inline]
    pub fn forcing(&self, t: f64, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.forcing)(t, q, p, out)
    }

    /// Noise matrix `sigma(t, q, p)` into `out` (row-major `n x d`).
    #[inline]
    pub fn noise(&self, t: f64, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.noise)(t, q, p, out)
    }
}

/// Standard kinetic energy `K(z) = |z|^2 / 2` (so `grad_p H = p / eps`):
/// the Smoluchowski–Kramers setting with caller-supplied potential.
pub fn smoluchowski_kramers_model(
    n: usize,
    potential: Scalar2,
    grad_q_potential: Grad2,
) -> Result<HamiltonianModel> {
    HamiltonianModel::new(
        n,
        2.0,
        Box::new(|_eps, _t, _q, z: &[f64]| 0.5 * z.iter().map(|zi| zi * zi).sum::<f64>()),
        Box::new(|_eps, _t, _q, z: &[f64], out: &mut [f64]| out.copy_from_slice(z)),
        Box::new(|_eps, _t, _q, _z, out: &mut [f64]| out.fill(0.0)),
        potential,
        grad_q_potential,
    )
}

/// Named ready-to-run model/coefficient pairs selectable from configs.
pub const PRESET_NAMES: [&str; 3] = [
    "smoluchowski_kramers",
    "sk_state_dependent_gamma",
    "anharmonic",
];

/// One-line description of each named preset, aligned with [`PRESET_NAMES`].
pub const PRESET_DESCRIPTIONS: [&str; 3] = [
    "K = z^2/2, V = cos q, constant friction gamma = 2, sigma = 1",
    "K = z^2/2, V = cos q, state-dependent friction gamma = 2 + sin q, sigma = 1",
    "K = z^2/2, V = q^4/4, state-dependent friction gamma = 2 + cos q, sigma = 1",
];

/// Build a named preset (scalar `n = d = 1`).
pub fn preset(name: &str) -> Result<(HamiltonianModel, CoefficientSet)> {
    let model = match name {
        "anharmonic" => smoluchowski_kramers_model(
            1,
            Box::new(|_t, q: &[f64]| 0.25 * q[0] * q[0] * q[0] * q[0]),
            Box::new(|_t, q: &[f64], out: &mut [f64]| out[0] = q[0] * q[0] * q[0]),
        )?,
        "smoluchowski_kramers" | "sk_state_dependent_gamma" => smoluchowski_kramers_model(
            1,
            Box::new(|_t, q: &[f64]| q[0].cos()),
            Box::new(|_t, q: &[f64], out: &mut [f64]| out[0] = -q[0].sin()),
        )?,
        _ => {
            return Err(Error::invalid(
                "name",
                format!("unknown preset `{name}`; known: {PRESET_NAMES:?}"),
            ))
        }
    };
    let coeffs = match name {
        "smoluchowski_kramers" => CoefficientSet::new(
            1,
            1,
            Box::new(|_t, _q, out: &mut [f64]| out[0] = 2.0),
            Box::new(|_t, _q, out: &mut [f64]| out[0] = 0.0),
            Box::new(|_t, _q, _p, out: &mut [f64]| out[0] = 0.0),
            Box::new(|_t, _q, _p, out: &mut [f64]| out[0] = 1.0),
        )?,
        "sk_state_dependent_gamma" => CoefficientSet::new(
            1,
            1,
            Box::new(|_t, q: &[f64], out: &mut [f64]| out[0] = 2.0 + q[0].sin()),
            Box::new(|_t, q: &[f64], out: &mut [f64]| out[0] = q[0].cos()),
            Box::new(|_t, _q, _p, out: &mut [f64]| out[0] = 0.0),
            Box::new(|_t, _q, _p, out: &mut [f64]| out[0] = 1.0),
        )?,
        "anharmonic" => CoefficientSet::new(
            1,
            1,
            Box::new(|_t, q: &[f64], out: &mut [f64]| out[0] = 2.0 + q[0].cos()),
            Box::new(|_t, q: &[f64], out: &mut [f64]| out[0] = -q[0].sin()),
            Box::new(|_t, _q, _p, out: &mut [f64]| out[0] = 0.0),
            Box::new(|_t, _q, _p, out: &mut [f64]| out[0] = 1.0),
        )?,
        _ => unreachable!(),
    };
    Ok((model, coeffs))
}

/// Outcome of one coefficient check.
#[derive(Debug, Clone)]
pub struct CheckItem {
    /// Short identifier of the property checked.
    pub name: &'static str,
    /// Whether the property held at every probe.
    pub passed: bool,
    /// Human-readable measurement (worst case over probes).
    pub detail: String,
}

/// Report from [`check_coefficients`].
#[derive(Debug, Clone)]
pub struct CheckReport {
    /// Individual checks in a fixed order.
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    /// True when every check passed.
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

/// Largest adjacent-difference slope of `f` over an `n`-point uniform grid
/// on `[lo, hi]` — an empirical Lipschitz constant.
pub fn fitted_lipschitz(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<f64> {
    if !(hi > lo) || n < 2 {
        return Err(Error::invalid("lo..hi", "need hi > lo and at least two grid points"));
    }
    let h = (hi - lo) / (n - 1) as f64;
    let mut max_slope: f64 = 0.0;
    let mut prev = f(lo);
    for i in 1..n {
        let x = lo + i as f64 * h;
        let fx = f(x);
        max_slope = max_slope.max(((fx - prev) / h).abs());
        prev = fx;
    }
    Ok(max_slope)
}

/// Validate a model/coefficient pair on random probe states.
///
/// Checks, each at `probes` random states `(t, q, p, z)` drawn from a seeded
/// RNG:
///
/// 1. `gamma` is symmetric and positive definite (smallest eigenvalue
///    recorded);
/// 2. `dgamma_dq` matches central finite differences of `gamma`;
/// 3. `grad_z K` and `grad_q K` match central finite differences of `K`;
/// 4. `grad_q V` matches central finite differences of `V`;
/// 5. `K` is coercive: `K / |z|^eta` stays positive on probes with
///    `|z| >= 1`;
/// 6. `sigma` and `F` are finite.
///
/// Gradient agreement uses relative tolerance 1e-6 (central differences with
/// step 1e-5 carry O(1e-10) truncation error on smooth fields, so genuine
/// derivative bugs stand out by orders of magnitude).
pub fn check_coefficients(
    model: &HamiltonianModel,
    coeffs: &CoefficientSet,
    probes: usize,
    seed: u64,
) -> Result<CheckReport> {
    if model.dim() != coeffs.dim() {
        return Err(Error::DimensionMismatch {
            arg: "coeffs",
            got: coeffs.dim(),
            need: model.dim(),
        });
    }
    if probes == 0 {
        return Err(Error::invalid("probes", "need at least one probe state"));
    }
    let n = model.dim();
    let d = coeffs.noise_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const FD_STEP: f64 = 1e-5;
    const GRAD_TOL: f64 = 1e-6;

    let mut min_eigenvalue = f64::INFINITY;
    let mut max_asym: f64 = 0.0;
    let mut worst_dgamma: f64 = 0.0;
    let mut worst_grad_z: f64 = 0.0;
    let mut worst_grad_q: f64 = 0.0;
    let mut worst_grad_v: f64 = 0.0;
    let mut min_coercivity = f64::INFINITY;
    let mut coeffs_finite = true;

    let mut gamma = vec![0.0; n * n];
    let mut gamma_lo = vec![0.0; n * n];
    let mut gamma_hi = vec![0.0; n * n];
    let mut dgamma = vec![0.0; n * n * n];
    let mut grad = vec![0.0; n];
    let mut field = vec![0.0; n.max(d) * n.max(d)];

    for _ in 0..probes {
        let t: f64 = rng.gen_range(0.0..1.0);
        let eps: f64 = rng.gen_range(0.01..1.0);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        // Probe |z| >= 1 so the coercivity ratio is informative.
        let z: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(-3.0..3.0);
                v + v.signum() * 1.0
            })
            .collect();

        // 1. Friction symmetry and positive definiteness.
        coeffs.friction(t, &q, &mut gamma);
        for i in 0..n {
            for j in (i + 1)..n {
                max_asym = max_asym.max((gamma[i * n + j] - gamma[j * n + i]).abs());
            }
        }
        let gm = nalgebra::DMatrix::from_row_slice(n, n, &gamma);
        let eig = gm.symmetric_eigen();
        let lam = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        min_eigenvalue = min_eigenvalue.min(lam);

        // 2. Friction derivative vs central differences.
        coeffs.dfriction_dq(t, &q, &mut dgamma);
        let mut q_shift = q.clone();
        for h in 0..n {
            q_shift[h] = q[h] + FD_STEP;
            coeffs.friction(t, &q_shift, &mut gamma_hi);
            q_shift[h] = q[h] - FD_STEP;
            coeffs.friction(t, &q_shift, &mut gamma_lo);
            q_shift[h] = q[h];
            for ij in 0..n * n {
                let fd = (gamma_hi[ij] - gamma_lo[ij]) / (2.0 * FD_STEP);
                let an = dgamma[h * n * n + ij];
                worst_dgamma = worst_dgamma.max((fd - an).abs() / an.abs().max(1.0));
            }
        }

        // 3. Kinetic gradients vs central differences.
        model.grad_z_kinetic(eps, t, &q, &z, &mut grad);
        let mut z_shift = z.clone();
        for h in 0..n {
            z_shift[h] = z[h] + FD_STEP;
            let khi = model.kinetic(eps, t, &q, &z_shift);
            z_shift[h] = z[h] - FD_STEP;
            let klo = model.kinetic(eps, t, &q, &z_shift);
            z_shift[h] = z[h];
            let fd = (khi - klo) / (2.0 * FD_STEP);
            worst_grad_z = worst_grad_z.max((fd - grad[h]).abs() / grad[h].abs().max(1.0));
        }
        model.grad_q_kinetic(eps, t, &q, &z, &mut grad);
        for h in 0..n {
            q_shift[h] = q[h] + FD_STEP;
            let khi = model.kinetic(eps, t, &q_shift, &z);
            q_shift[h] = q[h] - FD_STEP;
            let klo = model.kinetic(eps, t, &q_shift, &z);
            q_shift[h] = q[h];
            let fd = (khi - klo) / (2.0 * FD_STEP);
            worst_grad_q = worst_grad_q.max((fd - grad[h]).abs() / grad[h].abs().max(1.0));
        }

        // 4. Potential gradient vs central differences.
        model.grad_q_potential(t, &q, &mut grad);
        for h in 0..n {
            q_shift[h] = q[h] + FD_STEP;
            let vhi = model.potential(t, &q_shift);
            q_shift[h] = q[h] - FD_STEP;
            let vlo = model.potential(t, &q_shift);
            q_shift[h] = q[h];
            let fd = (vhi - vlo) / (2.0 * FD_STEP);
            worst_grad_v = worst_grad_v.max((fd - grad[h]).abs() / grad[h].abs().max(1.0));
        }

        // 5. Coercivity ratio.
        let znorm = crate::numeric::norm2(&z);
        let ratio = model.kinetic(eps, t, &q, &z) / znorm.powf(model.eta());
        min_coercivity = min_coercivity.min(ratio);

        // 6. Finite coefficients.
        coeffs.forcing(t, &q, &p, &mut field[..n]);
        coeffs_finite &= field[..n].iter().all(|v| v.is_finite());
        coeffs.noise(t, &q, &p, &mut field[..n * d]);
        coeffs_finite &= field[..n * d].iter().all(|v| v.is_finite());
    }

    let items = vec![
        CheckItem {
            name: "friction_spd",
            passed: min_eigenvalue > 0.0 && max_asym <= 1e-9,
            detail: format!("min eigenvalue {min_eigenvalue:.3e}, max asymmetry {max_asym:.3e}"),
        },
        CheckItem {
            name: "friction_gradient",
            passed: worst_dgamma <= GRAD_TOL,
            detail: format!("worst relative deviation {worst_dgamma:.3e}"),
        },
        CheckItem {
            name: "kinetic_gradients",
            passed: worst_grad_z <= GRAD_TOL && worst_grad_q <= GRAD_TOL,
            detail: format!("worst relative deviation z: {worst_grad_z:.3e}, q: {worst_grad_q:.3e}"),
        },
        CheckItem {
            name: "potential_gradient",
            passed: worst_grad_v <= GRAD_TOL,
            detail: format!("worst relative deviation {worst_grad_v:.3e}"),
        },
        CheckItem {
            name: "kinetic_coercive",
            passed: min_coercivity > 0.0,
            detail: format!("min K / |z|^eta ratio {min_coercivity:.3e}"),
        },
        CheckItem {
            name: "coefficients_finite",
            passed: coeffs_finite,
            detail: format!("all sigma/F entries finite: {coeffs_finite}"),
        },
    ];
    Ok(CheckReport { items })
}
