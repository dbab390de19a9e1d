//! Pure-jump Levy noise: measure specification, moments, compensator drift,
//! and compound-Poisson path sampling.
//!
//! # Model
//!
//! The driving noise is a pure-jump Levy process with triple `(0, 0, nu)`
//! and finite moments up to the orders used by the analysis. After
//! truncating any infinite activity at level `rho`, what is simulated is the
//! compound Poisson process
//!
//! ```text
//! L_t = sum_{t_j <= t} z_j  -  t * b_c,      b_c = integral_{|x| < 1} x nu(dx),
//! ```
//!
//! jumps at Poisson times with total intensity `nu(R^d \ B_rho)` and i.i.d.
//! marks from the normalized restriction of `nu`. The compensator drift
//! `b_c` is constant and is applied inside integrators as part of the drift,
//! never at jump times.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Relative tolerance for moment integrals evaluated by quadrature.
const MOMENT_QUAD_TOL: f64 = 1e-8;

/// Whether the measure is natively finite-activity or a truncation of an
/// infinite-activity measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// Finitely many jumps per unit time; `truncation_level` must be 0.
    FiniteActivity,
    /// Restriction of an infinite-activity measure to `|x| >= rho`; the
    /// discarded small-jump mean is reported by
    /// [`LevyMeasureSpec::small_jump_drift`] so callers can account for it.
    TruncatedInfiniteActivity,
}

/// Distribution of a single jump mark (one-dimensional marks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarkLaw {
    /// All marks equal `value`.
    PointMass { value: f64 },
    /// Marks `+scale` and `-scale` with probability 1/2 each.
    Rademacher { scale: f64 },
    /// Uniform density on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Symmetric truncated power law: density proportional to
    /// `|x|^(-tail_index - 1)` on `inner <= |x| <= outer`.
    TwoSidedPareto {
        tail_index: f64,
        inner: f64,
        outer: f64,
    },
}

impl MarkLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            MarkLaw::PointMass { value } => {
                if value == 0.0 || !value.is_finite() {
                    return Err(Error::invalid("mark_law", "point mass must be finite and nonzero"));
                }
            }
            MarkLaw::Rademacher { scale } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::invalid("mark_law", "Rademacher scale must be positive"));
                }
            }
            MarkLaw::Uniform { lo, hi } => {
                if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::invalid("mark_law", "uniform law needs finite hi > lo"));
                }
            }
            MarkLaw::TwoSidedPareto {
                tail_index,
                inner,
                outer,
            } => {
                if !(tail_index > 0.0) {
                    return Err(Error::invalid("mark_law", "tail index must be positive"));
                }
                if !(inner > 0.0) || !(outer > inner) || !outer.is_finite() {
                    return Err(Error::invalid(
                        "mark_law",
                        "truncated Pareto needs 0 < inner < outer < infinity",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Expectation of `|X|^r` under the normalized mark distribution.
    ///
    /// Atomic and uniform laws are evaluated in closed form; the truncated
    /// power law goes through adaptive quadrature on its density (relative
    /// tolerance 1e-8).
    fn abs_moment(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::invalid("r", "moment order must be finite and >= 0"));
        }
        match *self {
            MarkLaw::PointMass { value } => Ok(value.abs().powf(r)),
            MarkLaw::Rademacher { scale } => Ok(scale.powf(r)),
            MarkLaw::Uniform { lo, hi } => {
                // (1/(hi-lo)) * integral |x|^r, split at zero when needed.
                let prim = |x: f64| x.abs().powf(r + 1.0) / (r + 1.0);
                let v = if lo >= 0.0 {
                    prim(hi) - prim(lo)
                } else if hi <= 0.0 {
                    prim(lo) - prim(hi)
                } else {
                    prim(lo) + prim(hi)
                };
                Ok(v / (hi - lo))
            }
            MarkLaw::TwoSidedPareto {
                tail_index,
                inner,
                outer,
            } => {
                // Normalization over both tails.
                let alpha = tail_index;
                let mut tail = |x: f64| x.powf(-alpha - 1.0);
                let z = 2.0 * adaptive_simpson(&mut tail, inner, outer, MOMENT_QUAD_TOL, 0.0)?;
                let mut weighted = |x: f64| x.powf(r - alpha - 1.0);
                let m = 2.0 * adaptive_simpson(&mut weighted, inner, outer, MOMENT_QUAD_TOL, 0.0)?;
                Ok(m / z)
            }
        }
    }

    /// Expectation of `X 1_{|X| < 1}` under the normalized mark law (the
    /// integrand of the compensator drift).
    fn mean_inside_unit_ball(&self) -> Result<f64> {
        match *self {
            MarkLaw::PointMass { value } => Ok(if value.abs() < 1.0 { value } else { 0.0 }),
            // Symmetric laws integrate to zero over any symmetric region.
            MarkLaw::Rademacher { .. } | MarkLaw::TwoSidedPareto { .. } => Ok(0.0),
            MarkLaw::Uniform { lo, hi } => {
                let a = lo.max(-1.0).min(hi);
                let b = hi.min(1.0).max(lo);
                if b <= a {
                    return Ok(0.0);
                }
                Ok(0.5 * (b * b - a * a) / (hi - lo))
            }
        }
    }

    /// Expectation of `X 1_{|X| >= 1}` under the normalized mark law.
    /// Computed directly over the outside region (not by subtraction), so
    /// a law supported inside the unit ball yields exactly zero.
    fn mean_outside_unit_ball(&self) -> Result<f64> {
        match *self {
            MarkLaw::PointMass { value } => Ok(if value.abs() >= 1.0 { value } else { 0.0 }),
            MarkLaw::Rademacher { .. } | MarkLaw::TwoSidedPareto { .. } => Ok(0.0),
            MarkLaw::Uniform { lo, hi } => {
                let mut m = 0.0;
                if hi > 1.0 {
                    let a = lo.max(1.0);
                    m += 0.5 * (hi * hi - a * a);
                }
                if lo < -1.0 {
                    let b = hi.min(-1.0);
                    m += 0.5 * (b * b - lo * lo);
                }
                Ok(m / (hi - lo))
            }
        }
    }

    /// Draw one mark. Exact zeros are resampled (marks of a jump measure are
    /// nonzero by definition; for continuous laws this is a measure-zero
    /// guard).
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        loop {
            let x = match *self {
                MarkLaw::PointMass { value } => value,
                MarkLaw::Rademacher { scale } => {
                    if rng.gen::<bool>() {
                        scale
                    } else {
                        -scale
                    }
                }
                MarkLaw::Uniform { lo, hi } => rng.gen_range(lo..hi),
                MarkLaw::TwoSidedPareto {
                    tail_index,
                    inner,
                    outer,
                } => {
                    // Inverse CDF of the one-sided truncated power law, with
                    // a random sign.
                    let alpha = tail_index;
                    let u: f64 = rng.gen();
                    let ia = inner.powf(-alpha);
                    let oa = outer.powf(-alpha);
                    let mag = (ia - u * (ia - oa)).powf(-1.0 / alpha);
                    if rng.gen::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                }
            };
            if x != 0.0 {
                return x;
            }
        }
    }
}

/// Full specification of the (possibly truncated) jump measure `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    /// Finite activity vs truncated infinite activity.
    pub kind: MeasureKind,
    /// Total mass `nu(support)`; the Poisson jump rate per unit time.
    pub total_intensity: f64,
    /// Distribution of one mark under `nu / total_intensity`.
    pub mark_law: MarkLaw,
    /// Truncation level `rho` (0 for finite activity).
    pub truncation_level: f64,
    /// Mark dimension (currently 1).
    pub dim: usize,
}

impl LevyMeasureSpec {
    /// Validated constructor.
    pub fn new(
        kind: MeasureKind,
        total_intensity: f64,
        mark_law: MarkLaw,
        truncation_level: f64,
    ) -> Result<Self> {
        let spec = LevyMeasureSpec {
            kind,
            total_intensity,
            mark_law,
            truncation_level,
            dim: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        if !(self.total_intensity >= 0.0) || !self.total_intensity.is_finite() {
            return Err(Error::invalid("total_intensity", "must be finite and >= 0"));
        }
        if self.dim != 1 {
            return Err(Error::invalid("dim", "only one-dimensional marks are supported"));
        }
        self.mark_law.validate()?;
        match self.kind {
            MeasureKind::FiniteActivity => {
                if self.truncation_level != 0.0 {
                    return Err(Error::invalid(
                        "truncation_level",
                        "must be 0 for a finite-activity measure",
                    ));
                }
            }
            MeasureKind::TruncatedInfiniteActivity => {
                if !(self.truncation_level > 0.0) {
                    return Err(Error::invalid(
                        "truncation_level",
                        "must be positive for a truncated measure",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Absolute moment `integral |x|^r nu(dx) = intensity * E|X|^r`.
    pub fn moment(&self, r: f64) -> Result<f64> {
        Ok(self.total_intensity * self.mark_law.abs_moment(r)?)
    }

    /// Compensator drift `b_c = integral_{|x| < 1} x nu(dx)` (length-`dim`).
    pub fn compensator_drift(&self) -> Result<Vec<f64>> {
        Ok(vec![
            self.total_intensity * self.mark_law.mean_inside_unit_ball()?,
        ])
    }

    /// Mean of `L_1`: with the pathwise convention `L_t = sum z_j - t b_c`,
    /// `E[L_1] = integral_{|x| >= 1} x nu(dx)`.
    pub fn l1_mean(&self) -> Result<Vec<f64>> {
        Ok(vec![
            self.total_intensity * self.mark_law.mean_outside_unit_ball()?,
        ])
    }

    /// Mean small-jump drift discarded by truncation. Zero for finite
    /// activity and for symmetric truncated laws; reported so callers can
    /// fold it back into a deterministic drift if the application needs it.
    pub fn small_jump_drift(&self) -> Vec<f64> {
        // The supported truncated law (two-sided Pareto) is symmetric, so
        // the discarded mean is exactly zero.
        vec![0.0]
    }

    /// Sample the jumps of one path on the window `(t0, t1]`.
    ///
    /// Jump count is Poisson with mean `total_intensity * (t1 - t0)`; times
    /// are i.i.d. uniform on the window, sorted ascending; marks i.i.d. from
    /// the mark law. Fully determined by `seed`.
    pub fn sample_jumps(&self, t0: f64, t1: f64, seed: u64) -> Result<JumpRealization> {
        self.validate()?;
        if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::invalid("t0..t1", "window must be finite with t1 >= t0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean = self.total_intensity * (t1 - t0);
        let count = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|_| Error::invalid("total_intensity", "invalid Poisson mean"))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        let mut times: Vec<f64> = (0..count).map(|_| rng.gen_range(t0..t1)).collect();
        times.sort_unstable_by(f64::total_cmp);
        let events = times
            .into_iter()
            .map(|time| JumpEvent {
                time,
                mark: vec![self.mark_law.sample(&mut rng)],
            })
            .collect();
        Ok(JumpRealization {
            t0,
            t1,
            events,
            seed,
        })
    }
}

/// One jump: its time and its mark vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
}

/// All jumps of one sampled path on a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRealization {
    /// Window start (exclusive for jump times).
    pub t0: f64,
    /// Window end (inclusive).
    pub t1: f64,
    /// Jumps sorted by time.
    pub events: Vec<JumpEvent>,
    /// Seed that produced this realization.
    pub seed: u64,
}

impl JumpRealization {
    /// Number of jumps.
    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// True when the window contains no jumps.
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point_mass(intensity: f64, value: f64) -> LevyMeasureSpec {
        LevyMeasureSpec::new(
            MeasureKind::FiniteActivity,
            intensity,
            MarkLaw::PointMass { value },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn test_point_mass_moment() {
        // nu = 3 * delta_2: integral |x|^2 nu = 3 * 4 = 12.
        let spec = point_mass(3.0, 2.0);
        assert_relative_eq!(spec.moment(2.0).unwrap(), 12.0, max_relative = 1e-14);
    }

    #[test]
    fn test_point_mass_outside_ball_has_zero_compensator() {
        let spec = point_mass(3.0, 2.0);
        assert_eq!(spec.compensator_drift().unwrap(), vec![0.0]);
        assert_relative_eq!(spec.l1_mean().unwrap()[0], 6.0, max_relative = 1e-14);
    }

    #[test]
    fn test_point_mass_inside_ball_compensator() {
        let spec = point_mass(2.0, 0.5);
        assert_relative_eq!(spec.compensator_drift().unwrap()[0], 1.0, max_relative = 1e-14);
        assert_eq!(spec.l1_mean().unwrap(), vec![0.0]);
    }

    #[test]
    fn test_rademacher_symmetry() {
        let spec = LevyMeasureSpec::new(
            MeasureKind::FiniteActivity,
            5.0,
            MarkLaw::Rademacher { scale: 1.0 },
            0.0,
        )
        .unwrap();
        assert_eq!(spec.compensator_drift().unwrap(), vec![0.0]);
        assert_relative_eq!(spec.moment(2.0).unwrap(), 5.0, max_relative = 1e-14);
        assert_relative_eq!(spec.moment(3.0).unwrap(), 5.0, max_relative = 1e-14);
    }

    #[test]
    fn test_uniform_moments_closed_form() {
        let spec = LevyMeasureSpec::new(
            MeasureKind::FiniteActivity,
            2.0,
            MarkLaw::Uniform { lo: -0.15, hi: 0.2 },
            0.0,
        )
        .unwrap();
        assert_relative_eq!(spec.compensator_drift().unwrap()[0], 0.05, max_relative = 1e-12);
        assert_relative_eq!(spec.moment(2.0).unwrap(), 0.021666666666666667, max_relative = 1e-12);
        assert_relative_eq!(spec.moment(4.0).unwrap(), 0.0004525, max_relative = 1e-12);
        // All marks inside the unit ball: E[L_1] = 0 exactly.
        assert_eq!(spec.l1_mean().unwrap(), vec![0.0]);
    }

    #[test]
    fn test_truncated_pareto_second_moment_frozen_value() {
        // Tail index 3 on 0.1 <= |x| <= 5, intensity 1. Closed form:
        // moment(2) = 29.4 / 999.992 = 0.029400235201881616.
        let spec = LevyMeasureSpec::new(
            MeasureKind::TruncatedInfiniteActivity,
            1.0,
            MarkLaw::TwoSidedPareto {
                tail_index: 3.0,
                inner: 0.1,
                outer: 5.0,
            },
            0.1,
        )
        .unwrap();
        assert_relative_eq!(
            spec.moment(2.0).unwrap(),
            0.029400235201881616,
            max_relative = 1e-7
        );
        // Log-case moment r = alpha = 3: 3 ln(50) / 999.992.
        assert_relative_eq!(
            spec.moment(3.0).unwrap(),
            0.011736162905587683,
            max_relative = 1e-7
        );
        assert_eq!(spec.compensator_drift().unwrap(), vec![0.0]);
        assert_eq!(spec.small_jump_drift(), vec![0.0]);
    }

    #[test]
    fn test_moment_scales_linearly_in_intensity() {
        let one = point_mass(1.0, 0.5).moment(2.0).unwrap();
        let seven = point_mass(7.0, 0.5).moment(2.0).unwrap();
        assert_relative_eq!(seven, 7.0 * one, max_relative = 1e-14);
    }

    #[test]
    fn test_finite_activity_rejects_truncation() {
        assert!(LevyMeasureSpec::new(
            MeasureKind::FiniteActivity,
            1.0,
            MarkLaw::PointMass { value: 1.0 },
            0.5,
        )
        .is_err());
    }

    #[test]
    fn test_zero_intensity_samples_no_jumps() {
        let spec = point_mass(0.0, 1.0);
        let jumps = spec.sample_jumps(0.0, 10.0, 99).unwrap();
        assert!(jumps.is_empty());
    }

    #[test]
    fn test_sampling_is_seed_deterministic() {
        let spec = LevyMeasureSpec::new(
            MeasureKind::FiniteActivity,
            4.0,
            MarkLaw::Uniform { lo: -1.0, hi: 2.0 },
            0.0,
        )
        .unwrap();
        let a = spec.sample_jumps(0.0, 3.0, 1234).unwrap();
        let b = spec.sample_jumps(0.0, 3.0, 1234).unwrap();
        assert_eq!(a, b);
        let c = spec.sample_jumps(0.0, 3.0, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn test_sampled_times_sorted_inside_window() {
        let spec = LevyMeasureSpec::new(
            MeasureKind::FiniteActivity,
            50.0,
            MarkLaw::Rademacher { scale: 0.3 },
            0.0,
        )
        .unwrap();
        let jumps = spec.sample_jumps(1.0, 2.5, 7).unwrap();
        assert!(!jumps.is_empty());
        let mut prev = jumps.t0;
        for e in &jumps.events {
            assert!(e.time >= prev && e.time <= jumps.t1);
            prev = e.time;
            assert!(e.mark[0] == 0.3 || e.mark[0] == -0.3);
        }
    }

    #[test]
    fn test_sample_count_matches_intensity() {
        // Mean count lambda * T = 200; the empirical mean over 200 seeds
        // should be within ~5 sigma/sqrt(200) of it.
        let spec = LevyMeasureSpec::new(
            MeasureKind::FiniteActivity,
            20.0,
            MarkLaw::Rademacher { scale: 1.0 },
            0.0,
        )
        .unwrap();
        let mut total = 0usize;
        let n = 200;
        for seed in 0..n {
            total += spec.sample_jumps(0.0, 10.0, seed).unwrap().len();
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 200.0).abs() < 5.0, "empirical mean {mean}");
    }

    #[test]
    fn test_pareto_sampler_matches_quadrature_moment() {
        // Monte Carlo second moment vs the quadrature value; loose gate.
        let spec = LevyMeasureSpec::new(
            MeasureKind::TruncatedInfiniteActivity,
            30.0,
            MarkLaw::TwoSidedPareto {
                tail_index: 3.0,
                inner: 0.1,
                outer: 5.0,
            },
            0.1,
        )
        .unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..300 {
            for e in spec.sample_jumps(0.0, 1.0, seed).unwrap().events {
                sum += e.mark[0] * e.mark[0];
                count += 1;
            }
        }
        let mc = 30.0 * sum / count as f64;
        let analytic = spec.moment(2.0).unwrap();
        assert!(
            (mc - analytic).abs() < 0.15 * analytic,
            "mc {mc} vs analytic {analytic}"
        );
    }
}
