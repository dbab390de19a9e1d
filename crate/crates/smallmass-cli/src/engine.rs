//! Ensemble sweep engine: paired full/limiting integration with streaming
//! statistics.
//!
//! For each rung of the ε ladder the engine integrates `n_paths` pairs of
//! trajectories — the full fast–slow system and the limiting jump SDE — on a
//! shared jump-adapted grid driven by a shared jump realization, and records
//! per-path suprema of
//!
//! * the position gap `|q_full - q_limit|`,
//! * the momentum norm `|p|`,
//! * the kinetic energy `K`,
//! * the pathwise remainder `|R|` from the drift/jump bookkeeping identity,
//!
//! together with the running kinetic-energy ensemble moments on a uniform
//! subgrid (for the sup-of-expectation statistic).  Suprema are taken over
//! grid nodes, with post-jump values at jump nodes; the `O(Δt)` bias of this
//! node-sampled sup is documented rather than corrected.
//!
//! Per-path seeds come from `path_seed(master_seed, index)` and do not
//! depend on ε, so all rungs of the ladder see the same jump realizations
//! (common random numbers) and cross-rung comparisons are low-noise.
//!
//! Paths are processed in fixed chunks.  Chunks run in parallel, but each
//! chunk accumulates sequentially and chunk results are merged in chunk
//! order with compensated sums, so the output is byte-identical for every
//! thread count.
//!
//! A path whose full or limiting integration trips the blow-up guard is
//! excluded from every statistic and counted; more than 1% exclusions on a
//! rung aborts the run loudly rather than reporting silently biased
//! estimates.

use std::time::Instant;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use smallmass::numeric::{cholesky_in_place, cholesky_solve, path_seed, NeumaierSum};
use smallmass::{
    beta_exponent, fit_rate, k_moment_exponent, moment_of_sups, noise_drift_increment,
    p_sup_exponent, probability_exceed, CoefficientSet, FullStepper, HamiltonianModel,
    JumpRealization, LevyMeasureSpec, QuantityTag, RateFit, ReducedStepper, SweepResult, TimeGrid,
};

use crate::config::ExperimentConfig;

/// Paths per parallel work unit; fixed so that reductions are
/// schedule-independent.
const CHUNK: usize = 64;

/// Maximum number of uniform subgrid nodes kept for the kinetic-energy
/// expectation statistic.
const MAX_K_SLOTS: usize = 1025;

/// Maximum fraction of excluded (blown-up) paths tolerated per rung.
const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// One rate fit attached to its sweep identity.
#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    /// Statistic the fitted sweep tracks.
    pub quantity: QuantityTag,
    /// Moment order θ (threshold δ for exceedance sweeps).
    pub theta: f64,
    /// The log-log fit against the theoretical exponent.
    #[serde(flatten)]
    pub fit: RateFit,
}

/// Wall-clock and ensemble bookkeeping for one ε rung.
#[derive(Debug, Clone, Serialize)]
pub struct EpsSummary {
    /// The rung's ε.
    pub epsilon: f64,
    /// Integration step used on this rung.
    pub base_step: f64,
    /// Paths contributing to statistics.
    pub n_paths: usize,
    /// Paths excluded by the blow-up guard.
    pub excluded: usize,
    /// Wall-clock seconds spent on this rung.
    pub wall_secs: f64,
}

/// Everything a run produces before reporting: sweeps, fits, timings.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// All quantity sweeps in deterministic order.
    pub sweeps: Vec<SweepResult>,
    /// Rate fits for each sweep that admitted one.
    pub fits: Vec<FitRecord>,
    /// Per-rung ensemble summaries.
    pub eps_stats: Vec<EpsSummary>,
}

/// Per-path statistics from one full/limiting pair.
struct PathOutcome {
    blown: bool,
    sup_qdiff: f64,
    sup_p: f64,
    sup_k: f64,
    sup_r: f64,
}

/// Sequentially accumulated results of one chunk of paths.
struct ChunkOut {
    sup_qdiff: Vec<f64>,
    sup_p: Vec<f64>,
    sup_k: Vec<f64>,
    sup_r: Vec<f64>,
    excluded: usize,
    /// `k_sum[theta_index * slots + slot]`: sum of `K^theta` over included
    /// paths at each subgrid node.
    k_sum: Vec<f64>,
    k_sumsq: Vec<f64>,
}

/// Accumulates one sweep across the ε ladder.
struct SweepAcc {
    quantity: QuantityTag,
    theta: f64,
    values: Vec<f64>,
    std_errors: Vec<f64>,
    n_paths: Vec<usize>,
    excluded: Vec<usize>,
}

impl SweepAcc {
    fn new(quantity: QuantityTag, theta: f64) -> Self {
        SweepAcc {
            quantity,
            theta,
            values: Vec::new(),
            std_errors: Vec::new(),
            n_paths: Vec::new(),
            excluded: Vec::new(),
        }
    }

    fn push(&mut self, value: f64, std_error: f64, n_paths: usize, excluded: usize) {
        self.values.push(value);
        self.std_errors.push(std_error);
        self.n_paths.push(n_paths);
        self.excluded.push(excluded);
    }

    fn into_sweep(self, epsilons: Vec<f64>) -> smallmass::Result<SweepResult> {
        SweepResult::new(
            self.quantity,
            self.theta,
            epsilons,
            self.values,
            self.std_errors,
            self.n_paths,
            self.excluded,
        )
    }
}

/// Runs the configured experiment and returns sweeps, fits, and timings.
///
/// The config must already be valid; a config failing
/// [`ExperimentConfig::validate`] is rejected here with the full list of
/// violations.  Parallelism is taken from the ambient rayon thread pool, so
/// callers control it by installing a pool around this call.
pub fn run_experiment(config: &ExperimentConfig) -> anyhow::Result<ExperimentResult> {
    let violations = config.validate();
    if !violations.is_empty() {
        bail!("config is invalid:\n  {}", violations.join("\n  "));
    }

    let (model, coeffs) = smallmass::preset(&config.preset)?;
    let spec = config.measure()?;
    let compensator = spec.compensator_drift()?;
    let eta = model.eta();
    let ladder = config.epsilon_ladder();

    let mut accs = sweep_accumulators(config);
    let mut eps_stats = Vec::with_capacity(ladder.len());

    for &eps in &ladder {
        let started = Instant::now();
        let base_step = config.base_step(eps);
        let (stride, slots) = k_subgrid(config.horizon, base_step)?;

        let ensemble = run_rung(
            &model,
            &coeffs,
            &spec,
            &compensator,
            config,
            eps,
            base_step,
            stride,
            slots,
        )
        .with_context(|| format!("rung eps = {eps}"))?;

        let usable = config.n_paths - ensemble.excluded;
        let max_excluded = (config.n_paths as f64 * MAX_EXCLUDED_FRACTION).floor() as usize;
        if ensemble.excluded > max_excluded {
            bail!(
                "rung eps = {eps}: {} of {} paths hit the blow-up guard (more than {:.0}%); \
                 refusing to report statistics from a biased ensemble — reduce the step or \
                 check the model coefficients",
                ensemble.excluded,
                config.n_paths,
                MAX_EXCLUDED_FRACTION * 100.0
            );
        }

        push_rung_estimates(&mut accs, config, &ensemble, usable, slots)?;

        eps_stats.push(EpsSummary {
            epsilon: eps,
            base_step,
            n_paths: usable,
            excluded: ensemble.excluded,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }

    let mut sweeps = Vec::with_capacity(accs.len());
    for acc in accs {
        sweeps.push(acc.into_sweep(ladder.clone())?);
    }
    let fits = fit_sweeps(&sweeps, config, eta)?;

    Ok(ExperimentResult {
        sweeps,
        fits,
        eps_stats,
    })
}

/// Builds the sweep accumulators in their fixed output order.
fn sweep_accumulators(config: &ExperimentConfig) -> Vec<SweepAcc> {
    let mut accs = Vec::new();
    for &theta in &config.thetas {
        accs.push(SweepAcc::new(QuantityTag::SupMomentQDiff, theta));
    }
    for &theta in &config.thetas {
        accs.push(SweepAcc::new(QuantityTag::SupMomentR, theta));
    }
    for &theta in &config.p_thetas {
        accs.push(SweepAcc::new(QuantityTag::SupMomentP, theta));
    }
    for &theta in &config.k_thetas {
        accs.push(SweepAcc::new(QuantityTag::SupMomentK, theta));
    }
    for &theta in &config.k_thetas {
        accs.push(SweepAcc::new(QuantityTag::SupExpectationK, theta));
    }
    for &delta in &config.deltas {
        accs.push(SweepAcc::new(QuantityTag::ProbExceed, delta));
    }
    accs
}

/// Chooses the kinetic-energy subgrid: every `stride`-th uniform node,
/// at most [`MAX_K_SLOTS`] of them.
fn k_subgrid(horizon: f64, base_step: f64) -> anyhow::Result<(usize, usize)> {
    // An empty realization probes the uniform part of the grid, which is
    // shared by every path on the rung.
    let empty = JumpRealization {
        t0: 0.0,
        t1: horizon,
        events: Vec::new(),
        seed: 0,
    };
    let grid = TimeGrid::jump_adapted(0.0, horizon, base_step, &empty)?;
    let uniform = grid.uniform_count();
    let stride = uniform.div_ceil(MAX_K_SLOTS).max(1);
    Ok((stride, uniform.div_ceil(stride)))
}

/// Integrates one rung's ensemble and merges chunk results in chunk order.
#[allow(clippy::too_many_arguments)]
fn run_rung(
    model: &HamiltonianModel,
    coeffs: &CoefficientSet,
    spec: &LevyMeasureSpec,
    compensator: &[f64],
    config: &ExperimentConfig,
    eps: f64,
    base_step: f64,
    stride: usize,
    slots: usize,
) -> smallmass::Result<RungEnsemble> {
    let n_paths = config.n_paths;
    let n_chunks = n_paths.div_ceil(CHUNK);
    let k_width = config.k_thetas.len() * slots;

    let chunks: smallmass::Result<Vec<ChunkOut>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(n_paths);
            let mut out = ChunkOut {
                sup_qdiff: Vec::with_capacity(hi - lo),
                sup_p: Vec::with_capacity(hi - lo),
                sup_k: Vec::with_capacity(hi - lo),
                sup_r: Vec::with_capacity(hi - lo),
                excluded: 0,
                k_sum: vec![0.0; k_width],
                k_sumsq: vec![0.0; k_width],
            };
            let mut k_buf = vec![0.0; k_width];
            for index in lo..hi {
                let seed = path_seed(config.master_seed, index as u64);
                let outcome = simulate_pair(
                    model,
                    coeffs,
                    spec,
                    compensator,
                    eps,
                    base_step,
                    config.horizon,
                    &config.q0,
                    &config.p0,
                    seed,
                    &config.k_thetas,
                    stride,
                    slots,
                    &mut k_buf,
                )?;
                if outcome.blown {
                    out.excluded += 1;
                    continue;
                }
                out.sup_qdiff.push(outcome.sup_qdiff);
                out.sup_p.push(outcome.sup_p);
                out.sup_k.push(outcome.sup_k);
                out.sup_r.push(outcome.sup_r);
                for (sum, (sumsq, &k)) in out
                    .k_sum
                    .iter_mut()
                    .zip(out.k_sumsq.iter_mut().zip(k_buf.iter()))
                {
                    *sum += k;
                    *sumsq += k * k;
                }
            }
            Ok(out)
        })
        .collect();
    let chunks = chunks?;

    // Deterministic merge: chunk order is fixed, so the result does not
    // depend on how rayon scheduled the chunks.
    let mut ensemble = RungEnsemble {
        sup_qdiff: Vec::with_capacity(n_paths),
        sup_p: Vec::with_capacity(n_paths),
        sup_k: Vec::with_capacity(n_paths),
        sup_r: Vec::with_capacity(n_paths),
        excluded: 0,
        k_sum: vec![NeumaierSum::new(); k_width],
        k_sumsq: vec![NeumaierSum::new(); k_width],
    };
    for chunk in chunks {
        ensemble.sup_qdiff.extend_from_slice(&chunk.sup_qdiff);
        ensemble.sup_p.extend_from_slice(&chunk.sup_p);
        ensemble.sup_k.extend_from_slice(&chunk.sup_k);
        ensemble.sup_r.extend_from_slice(&chunk.sup_r);
        ensemble.excluded += chunk.excluded;
        for (acc, &x) in ensemble.k_sum.iter_mut().zip(chunk.k_sum.iter()) {
            acc.add(x);
        }
        for (acc, &x) in ensemble.k_sumsq.iter_mut().zip(chunk.k_sumsq.iter()) {
            acc.add(x);
        }
    }
    Ok(ensemble)
}

/// Merged per-rung ensemble statistics.
struct RungEnsemble {
    sup_qdiff: Vec<f64>,
    sup_p: Vec<f64>,
    sup_k: Vec<f64>,
    sup_r: Vec<f64>,
    excluded: usize,
    k_sum: Vec<NeumaierSum>,
    k_sumsq: Vec<NeumaierSum>,
}

/// Converts one rung's ensemble into per-sweep estimates, in the same fixed
/// order as [`sweep_accumulators`].
fn push_rung_estimates(
    accs: &mut [SweepAcc],
    config: &ExperimentConfig,
    ensemble: &RungEnsemble,
    usable: usize,
    slots: usize,
) -> anyhow::Result<()> {
    let excluded = ensemble.excluded;
    let mut cursor = 0usize;
    let mut push = |accs: &mut [SweepAcc], value: f64, std_error: f64| {
        accs[cursor].push(value, std_error, usable, excluded);
        cursor += 1;
    };

    for &theta in &config.thetas {
        let est = moment_of_sups(&ensemble.sup_qdiff, theta)?;
        push(accs, est.value, est.std_error);
    }
    for &theta in &config.thetas {
        let est = moment_of_sups(&ensemble.sup_r, theta)?;
        push(accs, est.value, est.std_error);
    }
    for &theta in &config.p_thetas {
        let est = moment_of_sups(&ensemble.sup_p, theta)?;
        push(accs, est.value, est.std_error);
    }
    for &theta in &config.k_thetas {
        let est = moment_of_sups(&ensemble.sup_k, theta)?;
        push(accs, est.value, est.std_error);
    }
    for (ti, _) in config.k_thetas.iter().enumerate() {
        // sup over the subgrid of the ensemble mean of K^theta, with the
        // standard error taken at the maximizing node.
        let m = usable as f64;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for slot in 0..slots {
            let sum = ensemble.k_sum[ti * slots + slot].value();
            let sumsq = ensemble.k_sumsq[ti * slots + slot].value();
            let mean = sum / m;
            let var = ((sumsq / m - mean * mean) / (m - 1.0)).max(0.0);
            if mean > best.0 {
                best = (mean, var.sqrt());
            }
        }
        push(accs, best.0, best.1);
    }
    for &delta in &config.deltas {
        let est = probability_exceed(&ensemble.sup_qdiff, delta)?;
        push(accs, est.value, est.std_error);
    }
    Ok(())
}

/// Fits every sweep against its theoretical exponent.
///
/// Nonpositive values are dropped by the fit with a warning; a sweep left
/// with fewer than the minimum number of usable points (for example an
/// exceedance probability that is identically zero at small ε) is skipped
/// with a warning instead of failing the run.
fn fit_sweeps(
    sweeps: &[SweepResult],
    config: &ExperimentConfig,
    eta: f64,
) -> anyhow::Result<Vec<FitRecord>> {
    let mut fits = Vec::with_capacity(sweeps.len());
    for sweep in sweeps {
        let theoretical = theoretical_exponent(sweep.quantity, sweep.theta, config, eta)?;
        let dropped = sweep.values.iter().filter(|v| !(**v > 0.0)).count();
        if dropped > 0 {
            eprintln!(
                "warning: {} theta={}: dropped {dropped} nonpositive value(s) from the rate fit",
                sweep.quantity.name(),
                sweep.theta
            );
        }
        match fit_rate(sweep, theoretical, config.rate_tolerance) {
            Ok(fit) => fits.push(FitRecord {
                quantity: sweep.quantity,
                theta: sweep.theta,
                fit,
            }),
            Err(smallmass::Error::TooFewPoints { have, need }) => {
                eprintln!(
                    "warning: {} theta={}: only {have} positive point(s) (need {need}); \
                     skipping the rate fit",
                    sweep.quantity.name(),
                    sweep.theta
                );
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(fits)
}

/// Theoretical decay exponent for one sweep.
///
/// Position gap and remainder follow the two-branch rate `beta(theta, eta)`;
/// the momentum sup-moment follows `theta/2 - theta/(2 eta)`; kinetic-energy
/// statistics follow `1 - max(2, theta)/2` (the expectation-of-sup variant
/// reuses the sup-of-expectation exponent as its stated upper bound).  For
/// exceedance probabilities the Chebyshev bound
/// `P(sup > delta) <= E[sup^theta] / delta^theta` gives `beta(theta, eta)`
/// for every configured theta; the best (largest) bound is used.
fn theoretical_exponent(
    quantity: QuantityTag,
    theta: f64,
    config: &ExperimentConfig,
    eta: f64,
) -> anyhow::Result<f64> {
    let exponent = match quantity {
        QuantityTag::SupMomentQDiff | QuantityTag::SupMomentR => beta_exponent(theta, eta)?,
        QuantityTag::SupMomentP => p_sup_exponent(theta, eta)?,
        QuantityTag::SupMomentK | QuantityTag::SupExpectationK => k_moment_exponent(theta)?,
        QuantityTag::ProbExceed => {
            let mut best = f64::NEG_INFINITY;
            for &t in &config.thetas {
                best = best.max(beta_exponent(t, eta)?);
            }
            best
        }
    };
    Ok(exponent)
}

/// Integrates one full/limiting pair on a shared grid and jump realization,
/// streaming the per-path statistics.
///
/// `k_buf[theta_index * slots + slot]` receives `K^theta` at each retained
/// uniform subgrid node; every slot is written exactly once per path.
/// Returns `blown: true` (statistics undefined) as soon as either leg trips
/// the blow-up guard.
#[allow(clippy::too_many_arguments)]
fn simulate_pair(
    model: &HamiltonianModel,
    coeffs: &CoefficientSet,
    spec: &LevyMeasureSpec,
    compensator: &[f64],
    eps: f64,
    base_step: f64,
    horizon: f64,
    q0: &[f64],
    p0: &[f64],
    seed: u64,
    k_thetas: &[f64],
    stride: usize,
    slots: usize,
    k_buf: &mut [f64],
) -> smallmass::Result<PathOutcome> {
    let n = model.dim();
    let jumps = spec.sample_jumps(0.0, horizon, seed)?;
    let grid = TimeGrid::jump_adapted(0.0, horizon, base_step, &jumps)?;

    let mut full = FullStepper::new(model, coeffs, eps, 0.0, q0, p0, compensator)?;
    let mut red = ReducedStepper::new(model, coeffs, 0.0, q0, compensator)?;

    // Remainder bookkeeping: d_acc accumulates gamma^{-1} dp + dq over drift
    // steps and gamma^{-1} (sigma z) + S at jumps; the remainder at a node is
    // q_full - q0 - d_acc.
    let mut d_acc: Vec<NeumaierSum> = vec![NeumaierSum::new(); n];
    let mut chol = vec![0.0; n * n];
    let mut tmp = vec![0.0; n];
    let mut ds = vec![0.0; n];
    let mut q_pre = vec![0.0; n];
    let mut p_pre = vec![0.0; n];

    k_buf.fill(0.0);

    let blown_outcome = PathOutcome {
        blown: true,
        sup_qdiff: 0.0,
        sup_p: 0.0,
        sup_k: 0.0,
        sup_r: 0.0,
    };

    // Node 0 statistics.
    let k0 = full.kinetic();
    let mut sup_qdiff = 0.0f64;
    let mut sup_p = dot_norm(full.p());
    let mut sup_k = k0;
    let mut sup_r = 0.0f64;
    record_k(k_buf, k_thetas, slots, 0, stride, k0);

    for i in 1..grid.len() {
        let t = grid.node(i);
        full.drift_step(t);
        red.drift_step(t);

        // Drift contribution to the bookkeeping accumulator, using the same
        // left-endpoint friction as the step itself.
        chol.copy_from_slice(full.gamma_left());
        let (dq, dp) = full.last_drift_increments();
        tmp.copy_from_slice(dp);
        if cholesky_in_place(&mut chol, n).is_ok() {
            cholesky_solve(&chol, n, &mut tmp);
            for k in 0..n {
                d_acc[k].add(tmp[k]);
                d_acc[k].add(dq[k]);
            }
        } else if !full.blown() {
            // Friction lost definiteness before the state guard tripped:
            // treat as a blow-up rather than reporting garbage.
            return Ok(blown_outcome);
        }

        if let Some(event) = grid.event_at(i) {
            let mark = &jumps.events[event].mark;
            q_pre.copy_from_slice(full.q());
            p_pre.copy_from_slice(full.p());
            noise_drift_increment(coeffs, t, &q_pre, &p_pre, mark, &mut ds)?;
            full.apply_jump(mark);
            red.apply_jump(mark)?;

            // Jump contribution: gamma^{-1} (pre-jump) kick plus the
            // jump-induced drift increment.
            coeffs.friction(t, &q_pre, &mut chol);
            tmp.copy_from_slice(full.last_jump_kick());
            if cholesky_in_place(&mut chol, n).is_ok() {
                cholesky_solve(&chol, n, &mut tmp);
                for k in 0..n {
                    d_acc[k].add(tmp[k]);
                    d_acc[k].add(ds[k]);
                }
            } else if !full.blown() {
                return Ok(blown_outcome);
            }
        }

        if full.blown() || red.blown() {
            return Ok(blown_outcome);
        }

        let qf = full.q();
        let qr = red.q();
        let mut qdiff2 = 0.0;
        let mut r2 = 0.0;
        for k in 0..n {
            let dqk = qf[k] - qr[k];
            qdiff2 += dqk * dqk;
            let rk = qf[k] - q0[k] - d_acc[k].value();
            r2 += rk * rk;
        }
        sup_qdiff = sup_qdiff.max(qdiff2.sqrt());
        sup_p = sup_p.max(dot_norm(full.p()));
        sup_r = sup_r.max(r2.sqrt());
        let k_now = full.kinetic();
        sup_k = sup_k.max(k_now);
        if let Some(u) = grid.uniform_at(i) {
            record_k(k_buf, k_thetas, slots, u, stride, k_now);
        }
    }

    Ok(PathOutcome {
        blown: false,
        sup_qdiff,
        sup_p,
        sup_k,
        sup_r,
    })
}

/// Euclidean norm of a short state vector.
#[inline]
fn dot_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stores `K^theta` for each configured theta if uniform node `u` is on the
/// subgrid.
#[inline]
fn record_k(k_buf: &mut [f64], k_thetas: &[f64], slots: usize, u: usize, stride: usize, k: f64) {
    if u % stride != 0 {
        return;
    }
    let slot = u / stride;
    if slot >= slots {
        return;
    }
    for (ti, &theta) in k_thetas.iter().enumerate() {
        k_buf[ti * slots + slot] = k.powf(theta);
    }
}
