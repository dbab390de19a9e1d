//! Experiment configuration: schema, validation, and canonical hashing.
//!
//! Configs are flat JSON documents with an explicit `schema_version` field.
//! Unknown keys are rejected so that typos fail loudly instead of silently
//! falling back to defaults.  The ε ladder is given either as an explicit
//! `epsilons` list or as a geometric rule (`eps_first`, `eps_ratio`,
//! `eps_count`); exactly one of the two forms must be present.
//!
//! Validation collects *all* violations rather than stopping at the first,
//! so a single `validate` run reports every field that needs fixing.  The
//! canonical config hash is a SHA-256 over the resolved config serialized
//! with sorted keys, which makes it stable under reordering of fields in
//! the JSON file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smallmass::{LevyMeasureSpec, MarkLaw, MeasureKind, PRESET_NAMES};

/// Current config schema version accepted by this binary.
pub const SCHEMA_VERSION: u32 = 1;

/// Minimum number of ε rungs: rate fits need at least four points.
pub const MIN_EPS_POINTS: usize = 4;

/// Minimum ensemble size per ε rung.
pub const MIN_PATHS: usize = 100;

fn default_p_thetas() -> Vec<f64> {
    vec![2.0]
}

fn default_k_thetas() -> Vec<f64> {
    vec![2.0]
}

fn default_rate_tolerance() -> f64 {
    0.1
}

fn default_max_step() -> f64 {
    1e-2
}

fn default_true() -> bool {
    true
}

/// Declarative description of one sweep experiment.
///
/// All physics lives in the named preset; this struct only selects the
/// preset, the driving noise, the ε ladder, ensemble sizes, and which
/// moments and thresholds to estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Config schema version; must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Name of a registered model preset (see `smallmass::preset`).
    pub preset: String,
    /// Time horizon `T` of each simulated path.
    pub horizon: f64,
    /// Initial position, one entry per configuration dimension.
    pub q0: Vec<f64>,
    /// Initial momentum, one entry per configuration dimension.
    pub p0: Vec<f64>,
    /// Explicit ε ladder, strictly decreasing in (0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    /// First rung of a geometric ε ladder (alternative to `epsilons`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_first: Option<f64>,
    /// Ratio of a geometric ε ladder, in (0, 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_ratio: Option<f64>,
    /// Number of rungs of a geometric ε ladder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_count: Option<usize>,
    /// Monte Carlo paths per ε rung.
    pub n_paths: usize,
    /// Master seed; per-path seeds are derived deterministically from it.
    pub master_seed: u64,
    /// Kind of the driving Lévy measure.
    pub measure_kind: MeasureKind,
    /// Total jump intensity of the driving measure.
    pub intensity: f64,
    /// Mark distribution of the driving measure.
    pub mark_law: MarkLaw,
    /// Truncation level for compound-Poisson approximation bookkeeping.
    #[serde(default)]
    pub truncation_level: f64,
    /// Moment orders θ for the position-difference and remainder sweeps.
    pub thetas: Vec<f64>,
    /// Moment orders θ for the momentum sweep (default `[2.0]`).
    #[serde(default = "default_p_thetas")]
    pub p_thetas: Vec<f64>,
    /// Moment orders θ for the kinetic-energy sweeps (default `[2.0]`).
    #[serde(default = "default_k_thetas")]
    pub k_thetas: Vec<f64>,
    /// Exceedance thresholds δ for the probability sweeps.
    pub deltas: Vec<f64>,
    /// One-sided slack used when comparing fitted to theoretical rates.
    #[serde(default = "default_rate_tolerance")]
    pub rate_tolerance: f64,
    /// Upper cap on the integration step (default `1e-2`); the per-rung
    /// step is `min(ε² · min(1, 1/intensity), max_step)`.
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    /// Output directory; may be overridden by `--out` or `SMALLMASS_OUT`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    /// Whether to emit the diagnostic `rates.svg` plot (default true).
    #[serde(default = "default_true")]
    pub emit_plots: bool,
}

impl ExperimentConfig {
    /// Parses a config from a JSON file, rejecting unknown keys.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config {} is not valid: {e}", path.display()))?;
        Ok(config)
    }

    /// Checks every declared invariant and returns one message per
    /// violation (empty means the config is runnable).
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();

        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }

        let model = smallmass::preset(&self.preset).ok();
        if model.is_none() {
            errors.push(format!(
                "preset: unknown preset {:?}; available: {}",
                self.preset,
                PRESET_NAMES.join(", ")
            ));
        }

        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            errors.push(format!("horizon: must be finite and > 0, got {}", self.horizon));
        }

        if let Some((m, _)) = &model {
            if self.q0.len() != m.dim() {
                errors.push(format!(
                    "q0: expected {} entries for preset {:?}, got {}",
                    m.dim(),
                    self.preset,
                    self.q0.len()
                ));
            }
            if self.p0.len() != m.dim() {
                errors.push(format!(
                    "p0: expected {} entries for preset {:?}, got {}",
                    m.dim(),
                    self.preset,
                    self.p0.len()
                ));
            }
        }
        for (name, v) in [("q0", &self.q0), ("p0", &self.p0)] {
            if v.iter().any(|x| !x.is_finite()) {
                errors.push(format!("{name}: entries must be finite"));
            }
        }

        self.validate_ladder(&mut errors);

        if self.n_paths < MIN_PATHS {
            errors.push(format!("n_paths: must be at least {MIN_PATHS}, got {}", self.n_paths));
        }

        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            errors.push(format!("intensity: must be finite and >= 0, got {}", self.intensity));
        }
        if let Err(e) = self.measure() {
            errors.push(format!("mark_law/measure: {e}"));
        }

        let eta = model.as_ref().map(|(m, _)| m.eta());
        if self.thetas.is_empty() {
            errors.push("thetas: must list at least one moment order".to_string());
        }
        for &theta in &self.thetas {
            if !(theta.is_finite() && theta > 0.0) {
                errors.push(format!("thetas: orders must be finite and > 0, got {theta}"));
            } else if let Some(eta) = eta {
                if theta >= eta {
                    errors.push(format!(
                        "thetas: order {theta} must be below the mark-moment order eta = {eta}"
                    ));
                }
            }
        }
        for (name, list) in [("p_thetas", &self.p_thetas), ("k_thetas", &self.k_thetas)] {
            if list.is_empty() {
                errors.push(format!("{name}: must list at least one moment order"));
            }
            for &theta in list.iter() {
                if !(theta.is_finite() && theta > 0.0) {
                    errors.push(format!("{name}: orders must be finite and > 0, got {theta}"));
                }
            }
        }
        for &delta in &self.deltas {
            if !(delta.is_finite() && delta > 0.0) {
                errors.push(format!("deltas: thresholds must be finite and > 0, got {delta}"));
            }
        }

        if !(self.rate_tolerance.is_finite() && self.rate_tolerance >= 0.0) {
            errors.push(format!(
                "rate_tolerance: must be finite and >= 0, got {}",
                self.rate_tolerance
            ));
        }
        if !(self.max_step.is_finite() && self.max_step > 0.0) {
            errors.push(format!("max_step: must be finite and > 0, got {}", self.max_step));
        } else if self.horizon.is_finite() && self.horizon > 0.0 && self.max_step > self.horizon {
            errors.push(format!(
                "max_step: must not exceed horizon = {}, got {}",
                self.horizon, self.max_step
            ));
        }

        errors
    }

    fn validate_ladder(&self, errors: &mut Vec<String>) {
        let has_list = self.epsilons.is_some();
        let trio = [
            ("eps_first", self.eps_first.is_some()),
            ("eps_ratio", self.eps_ratio.is_some()),
            ("eps_count", self.eps_count.is_some()),
        ];
        let has_any_trio = trio.iter().any(|(_, p)| *p);
        let has_full_trio = trio.iter().all(|(_, p)| *p);

        if has_list && has_any_trio {
            errors.push(
                "epsilons: give either an explicit list or the geometric rule \
                 (eps_first/eps_ratio/eps_count), not both"
                    .to_string(),
            );
            return;
        }
        if !has_list && !has_any_trio {
            errors.push(
                "epsilons: missing ladder; give an explicit list or the geometric rule \
                 (eps_first/eps_ratio/eps_count)"
                    .to_string(),
            );
            return;
        }

        if let Some(list) = &self.epsilons {
            if list.len() < MIN_EPS_POINTS {
                errors.push(format!(
                    "epsilons: rate fits need at least {MIN_EPS_POINTS} rungs, got {}",
                    list.len()
                ));
            }
            for &eps in list.iter() {
                if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
                    errors.push(format!("epsilons: rungs must lie in (0, 1], got {eps}"));
                }
            }
            if list.windows(2).any(|w| w[1] >= w[0]) {
                errors.push("epsilons: rungs must be strictly decreasing".to_string());
            }
            return;
        }

        if !has_full_trio {
            let missing: Vec<&str> =
                trio.iter().filter(|(_, p)| !*p).map(|(name, _)| *name).collect();
            errors.push(format!(
                "epsilons: geometric rule is incomplete; missing {}",
                missing.join(", ")
            ));
            return;
        }
        let first = self.eps_first.unwrap();
        let ratio = self.eps_ratio.unwrap();
        let count = self.eps_count.unwrap();
        if !(first.is_finite() && first > 0.0 && first <= 1.0) {
            errors.push(format!("eps_first: must lie in (0, 1], got {first}"));
        }
        if !(ratio.is_finite() && ratio > 0.0 && ratio < 1.0) {
            errors.push(format!("eps_ratio: must lie in (0, 1), got {ratio}"));
        }
        if count < MIN_EPS_POINTS {
            errors.push(format!(
                "eps_count: rate fits need at least {MIN_EPS_POINTS} rungs, got {count}"
            ));
        }
    }

    /// Materializes the ε ladder (valid configs only).
    pub fn epsilon_ladder(&self) -> Vec<f64> {
        if let Some(list) = &self.epsilons {
            return list.clone();
        }
        let first = self.eps_first.unwrap_or(0.25);
        let ratio = self.eps_ratio.unwrap_or(0.5);
        let count = self.eps_count.unwrap_or(MIN_EPS_POINTS);
        let mut ladder = Vec::with_capacity(count);
        let mut eps = first;
        for _ in 0..count {
            ladder.push(eps);
            eps *= ratio;
        }
        ladder
    }

    /// Returns a copy with the ε ladder materialized as an explicit list.
    ///
    /// The geometric-rule fields are cleared so that equivalent configs
    /// hash identically regardless of which ladder form they used.
    pub fn resolved(&self) -> Self {
        let mut resolved = self.clone();
        resolved.epsilons = Some(self.epsilon_ladder());
        resolved.eps_first = None;
        resolved.eps_ratio = None;
        resolved.eps_count = None;
        resolved
    }

    /// Integration step for one ε rung: `min(ε² · min(1, 1/intensity), max_step)`.
    pub fn base_step(&self, eps: f64) -> f64 {
        let rate_guard = if self.intensity > 0.0 { (1.0 / self.intensity).min(1.0) } else { 1.0 };
        (eps * eps * rate_guard).min(self.max_step)
    }

    /// Builds the driving Lévy measure described by the config.
    pub fn measure(&self) -> smallmass::Result<LevyMeasureSpec> {
        LevyMeasureSpec::new(
            self.measure_kind,
            self.intensity,
            self.mark_law.clone(),
            self.truncation_level,
        )
    }

    /// SHA-256 of the resolved config in canonical (sorted-key) JSON form.
    ///
    /// Stable under reordering of fields in the config file and under the
    /// choice of ladder form (list vs geometric rule).
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self.resolved()).expect("config serializes");
        let canonical: BTreeMap<String, serde_json::Value> = match value {
            serde_json::Value::Object(map) => map.into_iter().collect(),
            _ => unreachable!("config serializes to an object"),
        };
        let bytes = serde_json::to_vec(&canonical).expect("canonical config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> String {
        r#"{
            "schema_version": 1,
            "preset": "sk_state_dependent_gamma",
            "horizon": 1.0,
            "q0": [0.0],
            "p0": [0.0],
            "eps_first": 0.25,
            "eps_ratio": 0.5,
            "eps_count": 8,
            "n_paths": 2000,
            "master_seed": 1234,
            "measure_kind": "finite_activity",
            "intensity": 2.0,
            "mark_law": {"law": "uniform", "lo": -0.15, "hi": 0.2},
            "thetas": [1.0],
            "deltas": [0.25]
        }"#
        .to_string()
    }

    fn sample() -> ExperimentConfig {
        serde_json::from_str(&sample_json()).unwrap()
    }

    #[test]
    fn test_sample_config_is_valid() {
        let config = sample();
        assert!(config.validate().is_empty());
        assert_eq!(config.p_thetas, vec![2.0]);
        assert_eq!(config.k_thetas, vec![2.0]);
        assert!(config.emit_plots);
        assert_eq!(config.max_step, 1e-2);
    }

    #[test]
    fn test_unknown_key_rejected() {
        let text = sample_json().replace("\"thetas\"", "\"unknown_knob\": 3, \"thetas\"");
        let parsed: Result<ExperimentConfig, _> = serde_json::from_str(&text);
        let message = parsed.unwrap_err().to_string();
        assert!(message.contains("unknown_knob"), "error should name the key: {message}");
    }

    #[test]
    fn test_geometric_ladder_materialization() {
        let config = sample();
        let ladder = config.epsilon_ladder();
        assert_eq!(ladder.len(), 8);
        assert_eq!(ladder[0], 0.25);
        assert_eq!(ladder[7], 0.25 * 0.5f64.powi(7));
        let resolved = config.resolved();
        assert_eq!(resolved.epsilons.as_deref(), Some(&ladder[..]));
        assert!(resolved.eps_first.is_none());
    }

    #[test]
    fn test_hash_stable_under_field_reordering() {
        let config = sample();
        // Same content, fields permuted.
        let reordered = r#"{
            "deltas": [0.25],
            "thetas": [1.0],
            "mark_law": {"hi": 0.2, "law": "uniform", "lo": -0.15},
            "intensity": 2.0,
            "measure_kind": "finite_activity",
            "master_seed": 1234,
            "n_paths": 2000,
            "eps_count": 8,
            "eps_ratio": 0.5,
            "eps_first": 0.25,
            "p0": [0.0],
            "q0": [0.0],
            "horizon": 1.0,
            "preset": "sk_state_dependent_gamma",
            "schema_version": 1
        }"#;
        let permuted: ExperimentConfig = serde_json::from_str(reordered).unwrap();
        assert_eq!(config.config_hash(), permuted.config_hash());
    }

    #[test]
    fn test_hash_stable_under_ladder_form() {
        let config = sample();
        let mut listed = config.clone();
        listed.epsilons = Some(config.epsilon_ladder());
        listed.eps_first = None;
        listed.eps_ratio = None;
        listed.eps_count = None;
        assert_eq!(config.config_hash(), listed.config_hash());
    }

    #[test]
    fn test_hash_changes_with_content() {
        let config = sample();
        let mut other = config.clone();
        other.master_seed = 999;
        assert_ne!(config.config_hash(), other.config_hash());
    }

    #[test]
    fn test_validation_collects_all_errors() {
        let mut config = sample();
        config.schema_version = 7;
        config.preset = "no_such_preset".to_string();
        config.horizon = -1.0;
        config.n_paths = 3;
        config.eps_ratio = Some(1.5);
        let errors = config.validate();
        let joined = errors.join("\n");
        for needle in ["schema_version", "preset", "horizon", "n_paths", "eps_ratio"] {
            assert!(joined.contains(needle), "missing {needle} in:\n{joined}");
        }
    }

    #[test]
    fn test_epsilon_ladder_invariants_enforced() {
        let mut config = sample();
        config.eps_first = None;
        config.eps_ratio = None;
        config.eps_count = None;
        config.epsilons = Some(vec![0.25, 0.25, 0.125, 0.0625]);
        let errors = config.validate();
        assert!(errors.iter().any(|e| e.contains("strictly decreasing")), "{errors:?}");

        config.epsilons = Some(vec![1.5, 0.5, 0.25, 0.125]);
        let errors = config.validate();
        assert!(errors.iter().any(|e| e.contains("(0, 1]")), "{errors:?}");

        config.epsilons = Some(vec![0.5, 0.25, 0.125]);
        let errors = config.validate();
        assert!(errors.iter().any(|e| e.contains("at least 4")), "{errors:?}");
    }

    #[test]
    fn test_both_ladder_forms_rejected() {
        let mut config = sample();
        config.epsilons = Some(vec![0.5, 0.25, 0.125, 0.0625]);
        let errors = config.validate();
        assert!(errors.iter().any(|e| e.contains("not both")), "{errors:?}");
    }

    #[test]
    fn test_theta_above_eta_rejected() {
        let mut config = sample();
        // The uniform mark law has eta = 2 for this preset registry.
        config.thetas = vec![1.0, 2.5];
        let errors = config.validate();
        assert!(errors.iter().any(|e| e.contains("eta")), "{errors:?}");
    }

    #[test]
    fn test_base_step_rule() {
        let config = sample();
        // intensity 2 => rate guard 1/2; eps = 0.25 => 0.25^2 / 2 = 0.03125,
        // capped at 1e-2.
        assert_eq!(config.base_step(0.25), 1e-2);
        let eps = 0.25 * 0.5f64.powi(5);
        assert_eq!(config.base_step(eps), eps * eps * 0.5);

        // Intensity below 1 leaves the rate guard at 1 (0.09^2 < cap).
        let mut free = config.clone();
        free.intensity = 0.5;
        assert_eq!(free.base_step(0.09), 0.09 * 0.09);
        free.intensity = 0.0;
        assert_eq!(free.base_step(0.09), 0.09 * 0.09);
    }

    #[test]
    fn test_serde_roundtrip_preserves_config() {
        let config = sample().resolved();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config.config_hash(), back.config_hash());
    }
}
