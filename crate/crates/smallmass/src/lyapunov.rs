//! Friction Lyapunov equation and Green tensor.
//!
//! For a symmetric positive definite friction matrix `gamma`, the stationary
//! covariance-style equation
//!
//! ```text
//! gamma v + v gamma = c
//! ```
//!
//! has the unique solution `v = integral_0^inf exp(-y gamma) c exp(-y gamma) dy`,
//! and the associated Green tensor
//!
//! ```text
//! G[j, h, a, b] = integral_0^inf (exp(-y gamma))_aj (exp(-y gamma))_bh dy
//! ```
//!
//! contracts quadratic forms of the noise against the friction relaxation:
//! `v_jh = G[j, h, a, b] c_ab` for symmetric `c`. Both are computed through
//! one symmetric eigendecomposition; an independent route through the matrix
//! exponential and Gauss–Legendre quadrature ([`g_tensor_quadrature`]) serves
//! as a cross-check oracle in the test suite.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative symmetry tolerance for validated inputs.
const SYMMETRY_TOL: f64 = 1e-10;

/// Green tensor of a friction matrix, stored densely.
///
/// Layout: `values[((j*n + h)*n + a)*n + b] = G[j, h, a, b]`.
#[derive(Debug, Clone)]
pub struct GTensor {
    n: usize,
    values: Vec<f64>,
}

impl GTensor {
    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `G[j, h, a, b]`.
    #[inline]
    pub fn get(&self, j: usize, h: usize, a: usize, b: usize) -> f64 {
        self.values[((j * self.n + h) * self.n + a) * self.n + b]
    }

    /// Dense backing storage (row-major in the index order `j, h, a, b`).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Contract the last two indices against a symmetric matrix `c`
    /// (row-major `n x n`): returns `m[j, h] = sum_ab G[j,h,a,b] c[a,b]`.
    pub fn contract_matrix(&self, c: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if c.len() != n * n {
            return Err(Error::DimensionMismatch {
                arg: "c",
                got: c.len(),
                need: n * n,
            });
        }
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for h in 0..n {
                let block = &self.values[(j * n + h) * n * n..(j * n + h + 1) * n * n];
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += block[a * n + b] * c[a * n + b];
                    }
                }
                out[j * n + h] = s;
            }
        }
        Ok(out)
    }

    /// Contract the last two indices against the rank-one form `w wᵀ`:
    /// returns `m[j, h] = sum_ab G[j,h,a,b] w_a w_b`.
    pub fn contract_rank_one(&self, w: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                arg: "w",
                got: w.len(),
                need: n,
            });
        }
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for h in 0..n {
                let block = &self.values[(j * n + h) * n * n..(j * n + h + 1) * n * n];
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += block[a * n + b] * w[a] * w[b];
                    }
                }
                out[j * n + h] = s;
            }
        }
        Ok(out)
    }
}

/// Check that `m` is square, finite, and symmetric to a relative tolerance.
fn validate_symmetric(m: &DMatrix<f64>, arg: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::invalid(arg, format!("must be square and non-empty, got {}x{}", m.nrows(), m.ncols())));
    }
    let mut scale: f64 = 0.0;
    for v in m.iter() {
        if !v.is_finite() {
            return Err(Error::invalid(arg, "contains a non-finite entry"));
        }
        scale = scale.max(v.abs());
    }
    let mut asym: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale.max(1.0) {
        return Err(Error::NotSymmetric {
            found: asym,
            tol: SYMMETRY_TOL * scale.max(1.0),
        });
    }
    Ok(())
}

/// Symmetric eigendecomposition with a positivity check on the spectrum.
///
/// Uses the Jacobi solver from [`crate::numeric`]: tridiagonalization-based
/// routines can lose half the significant digits on clustered eigenvalue
/// pairs, which the Lyapunov division by `lambda_i + lambda_j` would then
/// amplify into the solution.
fn spd_eigen(gamma: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = gamma.nrows();
    let flat: Vec<f64> = (0..n * n).map(|k| gamma[(k / n, k % n)]).collect();
    let (lambda, u_flat) = crate::numeric::jacobi_eigen(&flat, n)?;
    let lambda_min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: lambda_min,
        });
    }
    let u = DMatrix::from_fn(n, n, |i, j| u_flat[i * n + j]);
    Ok((lambda, u))
}

/// Solve the friction Lyapunov equation `gamma v + v gamma = c` for symmetric
/// positive definite `gamma` and symmetric `c`.
///
/// Diagonalizes `gamma = u diag(lambda) uᵀ` and divides the rotated
/// right-hand side entrywise by `lambda_i + lambda_j`. The residual
/// `max |gamma v + v gamma - c|` is at the roundoff level
/// (`<= 1e-10 * max(1, max|c|)` for the dimensions used here).
pub fn solve_lyapunov(gamma: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate_symmetric(gamma, "gamma")?;
    validate_symmetric(c, "c")?;
    if gamma.nrows() != c.nrows() {
        return Err(Error::DimensionMismatch {
            arg: "c",
            got: c.nrows(),
            need: gamma.nrows(),
        });
    }
    let (lambda, u) = spd_eigen(gamma)?;
    let n = gamma.nrows();
    let rotated = u.transpose() * c * &u;
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] = rotated[(i, j)] / (lambda[i] + lambda[j]);
        }
    }
    Ok(&u * v * u.transpose())
}

/// Green tensor of `gamma` via the symmetric eigendecomposition.
///
/// With `gamma = sum_alpha lambda_alpha u_alpha u_alphaᵀ`,
///
/// ```text
/// G[j,h,a,b] = sum_{alpha,beta} u_alpha[a] u_alpha[j] u_beta[b] u_beta[h]
///              / (lambda_alpha + lambda_beta).
/// ```
pub fn g_tensor(gamma: &DMatrix<f64>) -> Result<GTensor> {
    validate_symmetric(gamma, "gamma")?;
    let (lambda, u) = spd_eigen(gamma)?;
    let n = gamma.nrows();
    let mut values = vec![0.0; n * n * n * n];
    for alpha in 0..n {
        for beta in 0..n {
            let w = 1.0 / (lambda[alpha] + lambda[beta]);
            for j in 0..n {
                let uaj = u[(j, alpha)];
                for h in 0..n {
                    let ubh = u[(h, beta)];
                    let base = (j * n + h) * n * n;
                    for a in 0..n {
                        let uaa = u[(a, alpha)];
                        for b in 0..n {
                            values[base + a * n + b] += w * uaa * uaj * u[(b, beta)] * ubh;
                        }
                    }
                }
            }
        }
    }
    Ok(GTensor { n, values })
}

/// Matrix exponential by Pade(13) approximation with scaling and squaring.
///
/// The standard double-precision algorithm: scale `a` by `2^-s` until its
/// 1-norm is below the Pade-13 threshold, evaluate the degree-13 diagonal
/// Pade approximant, and square the result `s` times. Accurate to ~1e-13
/// relative for well-scaled inputs; exact on the zero matrix.
pub fn matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::invalid("a", format!("must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("a", "contains a non-finite entry"));
    }
    const THETA_13: f64 = 5.371920351148152;
    #[allow(clippy::excessive_precision)]
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];

    let n = a.nrows();
    let norm1 = a
        .column_iter()
        .map(|col| col.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);

    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let ident = DMatrix::<f64>::identity(n, n);

    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &ident;
    let u = &scaled * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &ident;

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("a", "Pade denominator is singular (input too extreme)"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Green tensor computed by numerical quadrature — the slow cross-check
/// route, independent of the eigendecomposition used by [`g_tensor`].
///
/// Integrates `y -> exp(-y gamma) (x) exp(-y gamma)` with composite 16-point
/// Gauss–Legendre panels on `[0, Y]`, `Y = 40 / lambda_min`, doubling the
/// panel count until the whole tensor is stable to `rel_tol` in max norm.
/// The discarded tail is bounded by
/// `integral_Y^inf e^{-2 lambda_min y} dy = e^{-80} / (2 lambda_min)`,
/// far below any tolerance used here. The matrix exponential is evaluated by
/// [`matrix_exponential`] (Pade, not eigendecomposition), so agreement with
/// [`g_tensor`] checks the two routes against each other.
pub fn g_tensor_quadrature(gamma: &DMatrix<f64>, rel_tol: f64) -> Result<GTensor> {
    validate_symmetric(gamma, "gamma")?;
    if !(rel_tol > 0.0) {
        return Err(Error::invalid("rel_tol", "must be positive"));
    }
    let (lambda, _) = spd_eigen(gamma)?;
    let lambda_min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = 40.0 / lambda_min;
    let n = gamma.nrows();
    let nn = n * n * n * n;

    // One term of the composite rule: accumulate the full outer-product
    // tensor at each quadrature node.
    let tensor_on_panels = |panels: usize| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; nn];
        let width = y_max / panels as f64;
        for k in 0..panels {
            let lo = k as f64 * width;
            let mid = lo + 0.5 * width;
            let half = 0.5 * width;
            // Inline 16-point rule so each node's exponential is shared by
            // every tensor entry.
            for &(x, w) in GL16_NODES.iter() {
                let y = mid + half * x;
                let e = matrix_exponential(&(gamma * (-y)))?;
                let wy = w * half;
                for j in 0..n {
                    for h in 0..n {
                        let base = (j * n + h) * n * n;
                        for a in 0..n {
                            let eaj = e[(a, j)];
                            for b in 0..n {
                                acc[base + a * n + b] += wy * eaj * e[(b, h)];
                            }
                        }
                    }
                }
            }
        }
        Ok(acc)
    };

    let mut panels = 4usize;
    let mut prev = tensor_on_panels(panels)?;
    loop {
        panels *= 2;
        let next = tensor_on_panels(panels)?;
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let diff = prev
            .iter()
            .zip(next.iter())
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        if diff <= rel_tol * scale {
            return Ok(GTensor { n, values: next });
        }
        if panels > (1 << 12) {
            return Err(Error::QuadratureNoConvergence {
                estimate: diff / scale,
                evals: panels * 16,
            });
        }
        prev = next;
    }
}

/// Nodes shared with the quadrature module's 16-point rule.
// Tabulated values keep their full published digits; the compiler rounds
// them to the nearest representable f64.
#[allow(clippy::excessive_precision)]
const GL16_NODES: [(f64, f64); 16] = [
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

/// Convenience wrapper: one quadrature-oracle entry `G[j, h, a, b]`.
pub fn quadrature_g_entry(
    gamma: &DMatrix<f64>,
    j: usize,
    h: usize,
    a: usize,
    b: usize,
    rel_tol: f64,
) -> Result<f64> {
    let t = g_tensor_quadrature(gamma, rel_tol)?;
    let n = t.dim();
    if j >= n || h >= n || a >= n || b >= n {
        return Err(Error::invalid("j,h,a,b", format!("indices must be < {n}")));
    }
    Ok(t.get(j, h, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_abs_residual(gamma: &DMatrix<f64>, v: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
        let r = gamma * v + v * gamma - c;
        r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn test_scalar_lyapunov_is_half_over_gamma() {
        // 1x1: 2 gamma v = c.
        let gamma = DMatrix::from_element(1, 1, 3.0);
        let c = DMatrix::from_element(1, 1, 5.0);
        let v = solve_lyapunov(&gamma, &c).unwrap();
        assert_relative_eq!(v[(0, 0)], 5.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn test_identity_friction_halves_rhs() {
        let gamma = DMatrix::<f64>::identity(3, 3);
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 4.0, -1.0, 0.0, -1.0, 6.0]);
        let v = solve_lyapunov(&gamma, &c).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(v[(i, j)], 0.5 * c[(i, j)], max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn test_lyapunov_residual_small_on_generic_spd() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.1, 0.9, 0.3, -0.5, 0.2, 1.1]);
        let gamma = &m * m.transpose() + DMatrix::<f64>::identity(3, 3) * 0.5;
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, -0.3, 0.0, -0.3, 0.7]);
        let v = solve_lyapunov(&gamma, &c).unwrap();
        assert!(max_abs_residual(&gamma, &v, &c) <= 1e-12);
    }

    #[test]
    fn test_rejects_asymmetric_gamma() {
        let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let c = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            solve_lyapunov(&gamma, &c),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn test_rejects_indefinite_gamma() {
        let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let c = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            solve_lyapunov(&gamma, &c),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn test_scalar_g_is_inverse_two_gamma() {
        let gamma = DMatrix::from_element(1, 1, 4.0);
        let g = g_tensor(&gamma).unwrap();
        assert_relative_eq!(g.get(0, 0, 0, 0), 1.0 / 8.0, max_relative = 1e-14);
    }

    #[test]
    fn test_g_tensor_pair_swap_symmetry() {
        let m = DMatrix::from_row_slice(3, 3, &[1.2, 0.1, 0.0, -0.3, 0.8, 0.2, 0.4, 0.0, 1.0]);
        let gamma = &m * m.transpose() + DMatrix::<f64>::identity(3, 3);
        let g = g_tensor(&gamma).unwrap();
        for j in 0..3 {
            for h in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        assert_relative_eq!(
                            g.get(j, h, a, b),
                            g.get(h, j, b, a),
                            max_relative = 1e-12,
                            epsilon = 1e-15
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn test_g_contraction_solves_lyapunov() {
        // v[j,h] = G[j,h,a,b] c[a,b] must solve gamma v + v gamma = c.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.7]);
        let gamma = &m * m.transpose() + DMatrix::<f64>::identity(2, 2) * 0.6;
        let c = DMatrix::from_row_slice(2, 2, &[1.0, -0.4, -0.4, 2.0]);
        let g = g_tensor(&gamma).unwrap();
        let v_flat = g
            .contract_matrix(&[c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]])
            .unwrap();
        let v = DMatrix::from_row_slice(2, 2, &v_flat);
        assert!(max_abs_residual(&gamma, &v, &c) <= 1e-12);
    }

    #[test]
    fn test_expm_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        let e = matrix_exponential(&z).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(e[(i, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn test_expm_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let e = matrix_exponential(&a).unwrap();
        assert_relative_eq!(e[(0, 0)], 1f64.exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], (-2f64).exp(), max_relative = 1e-13);
        assert!(e[(0, 1)].abs() < 1e-14 && e[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn test_expm_nilpotent_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exponential(&a).unwrap();
        assert_relative_eq!(e[(0, 1)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(e[(0, 0)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn test_expm_inverse_relation() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 1.0, -0.5, 0.0, -0.7, 0.3, 0.4, 0.0, 0.1]);
        let e = matrix_exponential(&a).unwrap();
        let em = matrix_exponential(&(-&a)).unwrap();
        let prod = &e * &em;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn test_expm_large_norm_uses_scaling() {
        // exp(-30) on the diagonal; requires several squarings.
        let a = DMatrix::from_row_slice(2, 2, &[-30.0, 0.0, 0.0, -30.0]);
        let e = matrix_exponential(&a).unwrap();
        assert_relative_eq!(e[(0, 0)], (-30f64).exp(), max_relative = 1e-11);
    }

    #[test]
    fn test_quadrature_oracle_matches_scalar_formula() {
        let gamma = DMatrix::from_element(1, 1, 2.5);
        let entry = quadrature_g_entry(&gamma, 0, 0, 0, 0, 1e-9).unwrap();
        assert_relative_eq!(entry, 1.0 / 5.0, max_relative = 1e-8);
    }

    #[test]
    fn test_quadrature_oracle_matches_eigen_route_2d() {
        let m = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 1.1]);
        let gamma = &m * m.transpose() + DMatrix::<f64>::identity(2, 2) * 0.5;
        let exact = g_tensor(&gamma).unwrap();
        let quad = g_tensor_quadrature(&gamma, 1e-9).unwrap();
        for idx in 0..exact.values().len() {
            let a = exact.values()[idx];
            let b = quad.values()[idx];
            assert!(
                (a - b).abs() <= 1e-8 * a.abs().max(1.0),
                "entry {idx}: eigen {a} vs quadrature {b}"
            );
        }
    }
}
