//! Config-driven experiment runner for small-mass homogenization sweeps.
//!
//! The binary wraps the `smallmass` library in a reproducible pipeline:
//!
//! 1. [`config`]: flat JSON configs with schema versioning, exhaustive
//!    validation, and a canonical content hash;
//! 2. [`engine`]: paired full/limiting ensembles over an ε ladder with
//!    deterministic, thread-count-independent statistics;
//! 3. [`report`]: `sweep.csv`, `rates.json`, and an optional `rates.svg`
//!    diagnostic plot, all with exact-round-trip float formatting;
//! 4. [`manifest`]: provenance and a two-way file inventory;
//! 5. [`driver`]: orchestration, output-directory hygiene, and cleanup of
//!    partial outputs on failure.

// Validation deliberately writes `!(x > 0.0)` rather than `x <= 0.0`: the
// negated form is true for NaN, which must be rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod driver;
pub mod engine;
pub mod manifest;
pub mod report;

pub use config::ExperimentConfig;
pub use driver::{run_to_dir, RunOptions};
pub use engine::{run_experiment, EpsSummary, ExperimentResult, FitRecord};
pub use manifest::RunManifest;
