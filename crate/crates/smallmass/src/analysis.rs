//! Ensemble estimators, convergence-rate fits, and the theoretical
//! exponents they are compared against.
//!
//! The workflow: integrate an ensemble of paired full/limiting paths per
//! value of `eps`, reduce each path to scalar sup-statistics, estimate
//! moments of those sups ([`sup_moment_estimator`] / [`moment_of_sups`]) or
//! exceedance probabilities ([`probability_exceed`]), collect the ladder
//! into a [`SweepResult`], and fit a log-log slope against the predicted
//! exponent with [`fit_rate`].
//!
//! # Exponents
//!
//! With `theta` the moment order and `eta` the coercivity exponent of the
//! kinetic energy (`K >= c |z|^eta` for large `|z|`):
//!
//! ```text
//! beta_exponent(theta, eta)   = theta/2 * (1 - 1/eta)   if theta <= 2 eta/(eta+1)
//!                             = 1 - theta/eta            otherwise
//! p_sup_exponent(theta, eta)  = theta/2 - theta/(2 eta)
//! k_moment_exponent(theta)    = 1 - max(2, theta)/2
//! ```
//!
//! `beta_exponent` governs `E[sup_t |q_eps - q|^theta] = O(eps^beta)`;
//! `p_sup_exponent` governs `E[sup_t |p_eps|^theta]`; `k_moment_exponent`
//! governs `sup_t E[K^theta]`. The two branches of `beta_exponent` cross
//! continuously at `theta* = 2 eta/(eta+1)`.

use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use serde::{Deserialize, Serialize};

/// Which path statistic a sweep tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityTag {
    /// `E[ sup_t |q_eps(t) - q(t)|^theta ]` over coupled pairs.
    SupMomentQDiff,
    /// `E[ sup_t |p_eps(t)|^theta ]`.
    SupMomentP,
    /// `E[ sup_t K(t)^theta ]`.
    SupMomentK,
    /// `sup_t E[ K(t)^theta ]` (expectation first, then the sup in time).
    SupExpectationK,
    /// `P( sup_t |q_eps(t) - q(t)| > delta )`.
    ProbExceed,
    /// `E[ sup_t |R_eps(t)|^theta ]` for the pathwise remainder.
    SupMomentR,
}

impl QuantityTag {
    /// Stable lowercase name (matches the serde encoding).
    pub fn name(self) -> &'static str {
        match self {
            QuantityTag::SupMomentQDiff => "sup_moment_q_diff",
            QuantityTag::SupMomentP => "sup_moment_p",
            QuantityTag::SupMomentK => "sup_moment_k",
            QuantityTag::SupExpectationK => "sup_expectation_k",
            QuantityTag::ProbExceed => "prob_exceed",
            QuantityTag::SupMomentR => "sup_moment_r",
        }
    }
}

impl std::fmt::Display for QuantityTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// Point estimate.
    pub value: f64,
    /// Standard error of the estimate.
    pub std_error: f64,
    /// Number of paths that entered the estimate.
    pub n_paths: usize,
}

/// One quantity's estimates across a ladder of `eps` values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    /// Statistic the sweep tracks.
    pub quantity: QuantityTag,
    /// Moment order `theta` (for [`QuantityTag::ProbExceed`], the
    /// threshold `delta`).
    pub theta: f64,
    /// Ladder of `eps` values, strictly decreasing.
    pub epsilons: Vec<f64>,
    /// Estimate per rung.
    pub values: Vec<f64>,
    /// Standard error per rung.
    pub std_errors: Vec<f64>,
    /// Contributing paths per rung.
    pub n_paths: Vec<usize>,
    /// Paths excluded per rung (blowups).
    pub excluded: Vec<usize>,
}

impl SweepResult {
    /// Minimum ensemble size per rung for a statistically meaningful sweep.
    pub const MIN_PATHS: usize = 100;

    /// Validated constructor: equal lengths, strictly decreasing positive
    /// `eps`, finite estimates, and at least [`Self::MIN_PATHS`] paths per
    /// rung.
    pub fn new(
        quantity: QuantityTag,
        theta: f64,
        epsilons: Vec<f64>,
        values: Vec<f64>,
        std_errors: Vec<f64>,
        n_paths: Vec<usize>,
        excluded: Vec<usize>,
    ) -> Result<Self> {
        let m = epsilons.len();
        if m == 0 {
            return Err(Error::invalid("epsilons", "sweep must not be empty"));
        }
        if values.len() != m || std_errors.len() != m || n_paths.len() != m || excluded.len() != m
        {
            return Err(Error::invalid(
                "values/std_errors/n_paths/excluded",
                "all sweep arrays must match the eps ladder in length",
            ));
        }
        if epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::invalid("epsilons", "must be positive and finite"));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("epsilons", "must be strictly decreasing"));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::invalid("theta", "must be positive and finite"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "estimates must be finite"));
        }
        if std_errors.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid("std_errors", "must be finite and >= 0"));
        }
        if let Some(&n) = n_paths.iter().find(|&&n| n < Self::MIN_PATHS) {
            return Err(Error::TooFewPoints {
                have: n,
                need: Self::MIN_PATHS,
            });
        }
        Ok(SweepResult {
            quantity,
            theta,
            epsilons,
            values,
            std_errors,
            n_paths,
            excluded,
        })
    }

    /// Number of rungs in the ladder.
    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    /// True when the sweep has no rungs (never after construction).
    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty()
    }
}

/// Result of a log-log rate fit against a theoretical exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted slope of `ln value` against `ln eps`.
    pub slope: f64,
    /// Fitted intercept.
    pub intercept: f64,
    /// Coefficient of determination of the fit.
    pub r_squared: f64,
    /// Exponent predicted by the theory.
    pub theoretical_exponent: f64,
    /// One-sided slack allowed below the prediction.
    pub tolerance: f64,
    /// `slope >= theoretical_exponent - tolerance`: the observed decay is
    /// at least as fast as predicted, within tolerance.
    pub pass: bool,
}

/// Minimum number of usable (positive, finite) points for a rate fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Ordinary least squares of `ln value` on `ln eps` over the sweep's
/// usable rungs (positive finite values), compared against a theoretical
/// exponent with one-sided tolerance.
pub fn fit_rate(sweep: &SweepResult, theoretical_exponent: f64, tolerance: f64) -> Result<RateFit> {
    if !(tolerance >= 0.0) || !tolerance.is_finite() {
        return Err(Error::invalid("tolerance", "must be finite and >= 0"));
    }
    if !theoretical_exponent.is_finite() {
        return Err(Error::invalid("theoretical_exponent", "must be finite"));
    }
    let points: Vec<(f64, f64)> = sweep
        .epsilons
        .iter()
        .zip(sweep.values.iter())
        .filter(|&(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&e, &v)| (e.ln(), v.ln()))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            have: points.len(),
            need: MIN_FIT_POINTS,
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::invalid("epsilons", "all usable rungs share one eps"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let pass = slope >= theoretical_exponent - tolerance;
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        theoretical_exponent,
        tolerance,
        pass,
    })
}

/// Mean and standard error of `sup^theta` given the per-path sups.
pub fn moment_of_sups(sups: &[f64], theta: f64) -> Result<MomentEstimate> {
    if sups.len() < 2 {
        return Err(Error::TooFewPoints {
            have: sups.len(),
            need: 2,
        });
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::invalid("theta", "must be positive and finite"));
    }
    let n = sups.len() as f64;
    let mut sum = NeumaierSum::new();
    let mut sum_sq = NeumaierSum::new();
    for &s in sups {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::invalid("sups", "path sups must be finite and >= 0"));
        }
        let x = s.powf(theta);
        sum.add(x);
        sum_sq.add(x * x);
    }
    let mean = sum.value() / n;
    let var = (sum_sq.value() / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(MomentEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        n_paths: sups.len(),
    })
}

/// `E[ sup_t series^theta ]` over an ensemble of per-path scalar series
/// (each series a per-node sequence of norms).
pub fn sup_moment_estimator(paths: &[Vec<f64>], theta: f64) -> Result<MomentEstimate> {
    let sups: Vec<f64> = paths
        .iter()
        .map(|series| series.iter().copied().fold(0.0f64, f64::max))
        .collect();
    moment_of_sups(&sups, theta)
}

/// Exceedance probability `P(sup > delta)` with binomial standard error,
/// given the per-path sups.
pub fn probability_exceed(sups: &[f64], delta: f64) -> Result<MomentEstimate> {
    if sups.len() < 2 {
        return Err(Error::TooFewPoints {
            have: sups.len(),
            need: 2,
        });
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid("delta", "must be positive and finite"));
    }
    let n = sups.len() as f64;
    let hits = sups.iter().filter(|&&s| s > delta).count() as f64;
    let p = hits / n;
    Ok(MomentEstimate {
        value: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        n_paths: sups.len(),
    })
}

fn require_eta(eta: f64) -> Result<()> {
    if !(eta > 1.0) || !eta.is_finite() {
        return Err(Error::ExponentOutOfRange {
            theta: f64::NAN,
            eta,
            reason: "coercivity exponent eta must satisfy eta > 1",
        });
    }
    Ok(())
}

/// Convergence exponent of `E[sup_t |q_eps - q|^theta]`, valid for
/// `0 < theta < eta`:
///
/// ```text
/// theta/2 (1 - 1/eta)  for theta <= 2 eta / (eta + 1),
/// 1 - theta/eta        otherwise.
/// ```
pub fn beta_exponent(theta: f64, eta: f64) -> Result<f64> {
    require_eta(eta)?;
    if !(theta > 0.0) || !(theta < eta) {
        return Err(Error::ExponentOutOfRange {
            theta,
            eta,
            reason: "need 0 < theta < eta",
        });
    }
    let split = 2.0 * eta / (eta + 1.0);
    if theta <= split {
        Ok(theta / 2.0 * (1.0 - 1.0 / eta))
    } else {
        Ok(1.0 - theta / eta)
    }
}

/// Convergence exponent of `E[sup_t |p_eps|^theta]`: `theta/2 - theta/(2 eta)`.
pub fn p_sup_exponent(theta: f64, eta: f64) -> Result<f64> {
    require_eta(eta)?;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::ExponentOutOfRange {
            theta,
            eta,
            reason: "need theta > 0",
        });
    }
    Ok(theta / 2.0 - theta / (2.0 * eta))
}

/// Boundedness exponent of `sup_t E[K^theta]`: `1 - max(2, theta)/2`
/// (zero for `theta <= 2`, negative beyond).
pub fn k_moment_exponent(theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::ExponentOutOfRange {
            theta,
            eta: f64::NAN,
            reason: "need theta > 0",
        });
    }
    Ok(1.0 - theta.max(2.0) / 2.0)
}
