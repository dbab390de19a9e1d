//! One-dimensional quadrature: adaptive Simpson integration for measure
//! moments and composite Gauss–Legendre panels for the Green-tensor oracle.

use crate::error::{Error, Result};

/// 16-point Gauss–Legendre nodes and weights on `[-1, 1]`.
// Tabulated values keep their full published digits; the compiler rounds
// them to the nearest representable f64.
#[allow(clippy::excessive_precision)]
const GL16: [(f64, f64); 16] = [
    (-9.89400934991649939e-01, 2.71524594117540374e-02),
    (-9.44575023073232600e-01, 6.22535239386477063e-02),
    (-8.65631202387831755e-01, 9.51585116824925914e-02),
    (-7.55404408355002999e-01, 1.24628971255534030e-01),
    (-6.17876244402643771e-01, 1.49595988816576764e-01),
    (-4.58016777657227370e-01, 1.69156519395002619e-01),
    (-2.81603550779258915e-01, 1.82603415044923612e-01),
    (-9.50125098376374544e-02, 1.89450610455068585e-01),
    (9.50125098376374544e-02, 1.89450610455068585e-01),
    (2.81603550779258915e-01, 1.82603415044923612e-01),
    (4.58016777657227370e-01, 1.69156519395002619e-01),
    (6.17876244402643771e-01, 1.49595988816576764e-01),
    (7.55404408355002999e-01, 1.24628971255534030e-01),
    (8.65631202387831755e-01, 9.51585116824925914e-02),
    (9.44575023073232600e-01, 6.22535239386477063e-02),
    (9.89400934991649939e-01, 2.71524594117540374e-02),
];

/// Integrate `f` over `[a, b]` with one 16-point Gauss–Legendre rule.
pub fn gauss_legendre_16(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for &(x, w) in GL16.iter() {
        s += w * f(mid + half * x);
    }
    s * half
}

/// Integrate `f` over `[a, b]` by composite 16-point Gauss–Legendre panels,
/// doubling the panel count until two successive estimates agree to
/// `rel_tol` (relative to the magnitude of the latest estimate, with an
/// absolute floor for integrals near zero).
///
/// Returns the refined estimate. Fails if the tolerance is not met within
/// 2^14 panels.
pub fn gauss_legendre_panels(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("a..b", "integration interval must be finite with b >= a"));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::invalid("rel_tol", "must be positive"));
    }
    let mut panels: usize = 1;
    let mut prev = gauss_legendre_16(f, a, b);
    let mut evals = 16usize;
    while panels <= (1 << 14) {
        panels *= 2;
        let width = (b - a) / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            let lo = a + k as f64 * width;
            s += gauss_legendre_16(f, lo, lo + width);
        }
        evals += 16 * panels;
        let scale = s.abs().max(1e-300);
        if (s - prev).abs() <= rel_tol * scale + f64::EPSILON {
            return Ok(s);
        }
        prev = s;
    }
    Err(Error::QuadratureNoConvergence {
        estimate: ((prev - gauss_legendre_16(f, a, b)).abs()),
        evals,
    })
}

/// Adaptive Simpson integration of `f` over `[a, b]` to relative tolerance
/// `rel_tol` (with absolute floor `abs_tol` for integrals near zero).
///
/// Classic bisection with Richardson correction; recursion depth is capped
/// at 60 levels, after which the local estimate is accepted.
pub fn adaptive_simpson(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    if !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("a..b", "integration interval must be finite with b >= a"));
    }
    if !(rel_tol > 0.0) || !(abs_tol >= 0.0) {
        return Err(Error::invalid("rel_tol", "tolerances must be positive"));
    }
    if a == b {
        return Ok(0.0);
    }
    // First whole-interval estimate to set the scale for the relative test.
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = whole.abs().max(abs_tol).max(1e-300);
    let tol = rel_tol * scale;
    let v = simpson_recurse(f, a, b, fa, fm, fb, whole, tol, 60);
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        // Richardson extrapolation of the composite estimate.
        left + right + delta / 15.0
    } else {
        simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_gl16_exact_on_polynomials() {
        // Degree-31 polynomials are integrated exactly by 16-point GL.
        let mut f = |x: f64| x.powi(10) - 3.0 * x.powi(7) + x;
        let got = gauss_legendre_16(&mut f, 0.0, 1.0);
        let want = 1.0 / 11.0 - 3.0 / 8.0 + 0.5;
        assert_relative_eq!(got, want, max_relative = 1e-14);
    }

    #[test]
    fn test_panels_converge_on_decaying_exponential() {
        let mut f = |x: f64| (-2.0 * x).exp();
        let got = gauss_legendre_panels(&mut f, 0.0, 40.0, 1e-9).unwrap();
        let want = 0.5 * (1.0 - (-80.0f64).exp());
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }

    #[test]
    fn test_adaptive_simpson_on_smooth_integrand() {
        let mut f = |x: f64| x.sin();
        let got = adaptive_simpson(&mut f, 0.0, std::f64::consts::PI, 1e-10, 0.0).unwrap();
        assert_relative_eq!(got, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn test_adaptive_simpson_handles_sharp_peak() {
        // Narrow Gaussian-like bump; naive fixed rules miss it.
        let mut f = |x: f64| (-(x * x) / 2e-4).exp();
        let got = adaptive_simpson(&mut f, -1.0, 1.0, 1e-9, 0.0).unwrap();
        let want = (2e-4 * std::f64::consts::PI).sqrt(); // full Gaussian mass, tails negligible
        assert_relative_eq!(got, want, max_relative = 1e-8);
    }

    #[test]
    fn test_empty_interval_is_zero() {
        let mut f = |_x: f64| 1.0;
        assert_eq!(adaptive_simpson(&mut f, 2.0, 2.0, 1e-9, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn test_reversed_interval_is_rejected() {
        let mut f = |_x: f64| 1.0;
        assert!(adaptive_simpson(&mut f, 1.0, 0.0, 1e-9, 0.0).is_err());
        assert!(gauss_legendre_panels(&mut f, 1.0, 0.0, 1e-9).is_err());
    }
}
