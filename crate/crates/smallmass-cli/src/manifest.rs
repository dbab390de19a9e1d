//! Run manifest: provenance and inventory for one output directory.
//!
//! The manifest records the canonical config hash, the tool version, the
//! effective seed and flags, wall-clock timings per stage and per ε rung,
//! and the complete list of files the run produced.  The inventory is
//! enforced in both directions: every listed file exists, and every file in
//! the output directory is listed (the manifest lists itself).

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::engine::EpsSummary;

/// Command-line flags and overrides echoed into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct FlagsEcho {
    /// Output directory actually used.
    pub out: String,
    /// Where the output directory came from: `flag`, `env`, `config`, or
    /// `default`.
    pub out_source: String,
    /// `--seed` override, if given.
    pub seed: Option<u64>,
    /// `--threads` override, if given.
    pub threads: Option<usize>,
    /// Whether `--no-plots` suppressed the diagnostic plot.
    pub no_plots: bool,
}

/// Wall-clock time of one pipeline stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    /// Stage name (`simulate`, `report`).
    pub stage: String,
    /// Wall-clock seconds.
    pub wall_secs: f64,
}

/// Top-level manifest written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Manifest schema version.
    pub schema_version: u32,
    /// Version of the binary that produced the run.
    pub tool_version: String,
    /// Canonical hash of the effective (resolved) config.
    pub config_hash: String,
    /// Effective master seed (after any `--seed` override).
    pub master_seed: u64,
    /// Flags and overrides in effect.
    pub flags: FlagsEcho,
    /// Pipeline stage timings.
    pub stages: Vec<StageTiming>,
    /// Per-rung ensemble summaries (paths, exclusions, wall clock).
    pub per_eps: Vec<EpsSummary>,
    /// Every file in the output directory, including this manifest.
    pub files: Vec<String>,
}

/// Serializes the manifest to `manifest.json` in `dir`.
pub fn write_manifest(manifest: &RunManifest, dir: &Path) -> anyhow::Result<()> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest).context("cannot serialize manifest")?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Checks the two-way inventory invariant: the set of files in `dir` equals
/// the manifest's file list exactly.
pub fn check_inventory(dir: &Path, files: &[String]) -> anyhow::Result<()> {
    let listed: BTreeSet<&str> = files.iter().map(|s| s.as_str()).collect();
    let mut present = BTreeSet::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))?
    {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        present.insert(name);
    }
    let present_refs: BTreeSet<&str> = present.iter().map(|s| s.as_str()).collect();
    let missing: Vec<&str> = listed.difference(&present_refs).copied().collect();
    let unlisted: Vec<&str> = present_refs.difference(&listed).copied().collect();
    if !missing.is_empty() || !unlisted.is_empty() {
        anyhow::bail!(
            "output inventory mismatch in {}: missing from directory: [{}]; \
             not listed in manifest: [{}]",
            dir.display(),
            missing.join(", "),
            unlisted.join(", ")
        );
    }
    Ok(())
}
