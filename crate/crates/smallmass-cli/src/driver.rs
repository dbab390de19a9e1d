//! End-to-end run driver: apply overrides, simulate, emit reports and the
//! manifest, and keep the output directory honest.
//!
//! The driver owns the output-directory lifecycle: known artifact names from
//! a previous run are replaced, unrelated files are refused up front, and on
//! failure every partially written artifact is removed so a crashed run
//! leaves no misleading output behind.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;

use crate::config::ExperimentConfig;
use crate::engine::{self, ExperimentResult};
use crate::manifest::{check_inventory, write_manifest, FlagsEcho, RunManifest, StageTiming};
use crate::report;

/// Environment variable that overrides the output directory (weaker than
/// `--out`, stronger than the config's `out_dir`).
pub const OUT_ENV_VAR: &str = "SMALLMASS_OUT";

/// Output directory used when neither flag, environment, nor config name
/// one.
pub const DEFAULT_OUT_DIR: &str = "smallmass-out";

/// Artifact names a run may produce; anything else in the output directory
/// is refused.
const ARTIFACTS: [&str; 5] = [
    "config.json",
    "sweep.csv",
    "rates.json",
    "rates.svg",
    "manifest.json",
];

/// Resolved invocation: the effective config plus flag provenance.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Output directory after precedence resolution.
    pub out_dir: PathBuf,
    /// Where the output directory came from (`flag`/`env`/`config`/`default`).
    pub out_source: String,
    /// `--seed` override, if given.
    pub seed: Option<u64>,
    /// `--threads` override, if given.
    pub threads: Option<usize>,
    /// `--no-plots` flag.
    pub no_plots: bool,
}

impl RunOptions {
    /// Resolves the output directory with precedence
    /// `--out` > `SMALLMASS_OUT` > config `out_dir` > default.
    pub fn resolve(
        config: &ExperimentConfig,
        out_flag: Option<PathBuf>,
        seed: Option<u64>,
        threads: Option<usize>,
        no_plots: bool,
    ) -> Self {
        let (out_dir, out_source) = if let Some(dir) = out_flag {
            (dir, "flag")
        } else if let Some(dir) = std::env::var_os(OUT_ENV_VAR).filter(|v| !v.is_empty()) {
            (PathBuf::from(dir), "env")
        } else if let Some(dir) = &config.out_dir {
            (PathBuf::from(dir), "config")
        } else {
            (PathBuf::from(DEFAULT_OUT_DIR), "default")
        };
        RunOptions {
            out_dir,
            out_source: out_source.to_string(),
            seed,
            threads,
            no_plots,
        }
    }
}

/// Removes tracked files on drop unless the run committed.
struct PartialOutputs<'d> {
    dir: &'d Path,
    written: Vec<&'static str>,
    committed: bool,
}

impl<'d> PartialOutputs<'d> {
    fn track(&mut self, name: &'static str) {
        self.written.push(name);
    }
}

impl Drop for PartialOutputs<'_> {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for name in &self.written {
            let _ = std::fs::remove_file(self.dir.join(name));
        }
        // Remove the directory too if the failed run was the only content.
        let _ = std::fs::remove_dir(self.dir);
    }
}

/// Runs the experiment and writes all artifacts into the resolved output
/// directory, returning the manifest.
///
/// The config must be valid (callers surface validation separately so they
/// can exit with the dedicated status code).  On any failure after output
/// has started, the partial artifacts are removed before the error is
/// returned.
pub fn run_to_dir(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> anyhow::Result<RunManifest> {
    let mut effective = config.clone();
    if let Some(seed) = options.seed {
        effective.master_seed = seed;
    }
    let effective = effective.resolved();

    prepare_out_dir(&options.out_dir)?;

    let mut outputs = PartialOutputs {
        dir: &options.out_dir,
        written: Vec::new(),
        committed: false,
    };

    let simulate_started = Instant::now();
    let result = match options.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("cannot build thread pool")?
            .install(|| engine::run_experiment(&effective)),
        None => engine::run_experiment(&effective),
    }?;
    let simulate_secs = simulate_started.elapsed().as_secs_f64();

    let report_started = Instant::now();
    let emit_svg = effective.emit_plots && !options.no_plots;
    write_artifacts(&effective, &result, &options.out_dir, emit_svg, &mut outputs)?;

    let mut files: Vec<String> = outputs.written.iter().map(|s| s.to_string()).collect();
    files.push("manifest.json".to_string());
    files.sort();

    let manifest = RunManifest {
        schema_version: crate::config::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: effective.config_hash(),
        master_seed: effective.master_seed,
        flags: FlagsEcho {
            out: options.out_dir.display().to_string(),
            out_source: options.out_source.clone(),
            seed: options.seed,
            threads: options.threads,
            no_plots: options.no_plots,
        },
        stages: vec![
            StageTiming {
                stage: "simulate".to_string(),
                wall_secs: simulate_secs,
            },
            StageTiming {
                stage: "report".to_string(),
                wall_secs: report_started.elapsed().as_secs_f64(),
            },
        ],
        per_eps: result.eps_stats.clone(),
        files,
    };
    write_manifest(&manifest, &options.out_dir)?;
    outputs.track("manifest.json");
    check_inventory(&options.out_dir, &manifest.files)?;

    outputs.committed = true;
    Ok(manifest)
}

/// Creates the output directory if needed; clears known artifacts from a
/// previous run; refuses a directory holding anything else.
fn prepare_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))?
    {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if ARTIFACTS.contains(&name.as_str()) {
            std::fs::remove_file(entry.path())
                .with_context(|| format!("cannot clear old artifact {name}"))?;
        } else {
            anyhow::bail!(
                "output directory {} contains an unrelated entry {name:?}; \
                 refusing to mix run artifacts with other files",
                dir.display()
            );
        }
    }
    Ok(())
}

/// Writes config echo, sweep CSV, rates JSON, and optionally the SVG plot.
fn write_artifacts(
    config: &ExperimentConfig,
    result: &ExperimentResult,
    dir: &Path,
    emit_svg: bool,
    outputs: &mut PartialOutputs<'_>,
) -> anyhow::Result<()> {
    let mut config_text =
        serde_json::to_string_pretty(config).context("cannot serialize config echo")?;
    config_text.push('\n');
    std::fs::write(dir.join("config.json"), config_text)
        .with_context(|| format!("cannot write {}", dir.join("config.json").display()))?;
    outputs.track("config.json");

    report::write_csv(&result.sweeps, dir)?;
    outputs.track("sweep.csv");

    report::write_rates(&result.fits, dir)?;
    outputs.track("rates.json");

    if emit_svg {
        report::write_svg(&result.sweeps, &result.fits, dir)?;
        outputs.track("rates.svg");
    }
    Ok(())
}
