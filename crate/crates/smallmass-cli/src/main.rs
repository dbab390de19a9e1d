//! Command-line entry point: `run`, `validate`, and `presets`.
//!
//! Exit codes: 0 on success, 2 on config validation failure, 1 on runtime
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smallmass_cli::config::ExperimentConfig;
use smallmass_cli::driver::{run_to_dir, RunOptions};

#[derive(Parser)]
#[command(
    name = "smallmass-cli",
    version,
    about = "Convergence-rate experiments for the small-mass limit of jump-driven Langevin systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to the JSON config.
        config: PathBuf,
        /// Output directory (overrides SMALLMASS_OUT and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker thread count (default: one per logical CPU).
        #[arg(long)]
        threads: Option<usize>,
        /// Skip the rates.svg diagnostic plot.
        #[arg(long)]
        no_plots: bool,
    },
    /// Check a config file and report every violation.
    Validate {
        /// Path to the JSON config.
        config: PathBuf,
    },
    /// List the registered model presets.
    Presets,
}

/// Exit status for config problems (parse errors or validation failures).
const EXIT_INVALID_CONFIG: u8 = 2;
/// Exit status for runtime failures.
const EXIT_RUNTIME: u8 = 1;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            threads,
            no_plots,
        } => run(config, out, seed, threads, no_plots),
        Command::Validate { config } => validate(config),
        Command::Presets => presets(),
    }
}

fn load_and_validate(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let config = match ExperimentConfig::load(path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(ExitCode::from(EXIT_INVALID_CONFIG));
        }
    };
    let violations = config.validate();
    if !violations.is_empty() {
        eprintln!("config {} is invalid:", path.display());
        for violation in &violations {
            eprintln!("  - {violation}");
        }
        return Err(ExitCode::from(EXIT_INVALID_CONFIG));
    }
    Ok(config)
}

fn run(
    config_path: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    no_plots: bool,
) -> ExitCode {
    let config = match load_and_validate(&config_path) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let options = RunOptions::resolve(&config, out, seed, threads, no_plots);
    match run_to_dir(&config, &options) {
        Ok(manifest) => {
            println!("run complete: {} files in {}", manifest.files.len(), options.out_dir.display());
            println!("config hash: {}", manifest.config_hash);
            for eps in &manifest.per_eps {
                println!(
                    "  eps={:<12.6e} paths={} excluded={} wall={:.2}s",
                    eps.epsilon, eps.n_paths, eps.excluded, eps.wall_secs
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn validate(config_path: PathBuf) -> ExitCode {
    match load_and_validate(&config_path) {
        Ok(config) => {
            println!(
                "config {} is valid (hash {})",
                config_path.display(),
                config.config_hash()
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn presets() -> ExitCode {
    let names = smallmass::model::PRESET_NAMES.iter();
    let descriptions = smallmass::model::PRESET_DESCRIPTIONS.iter();
    for (name, description) in names.zip(descriptions) {
        println!("{name:<28} {description}");
    }
    ExitCode::SUCCESS
}
