//! End-to-end contract tests for the `smallmass-cli` binary: exit codes,
//! output inventory, determinism across invocations and thread counts, and
//! out-directory resolution.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_smallmass-cli");

/// A deliberately small but valid experiment: four rungs, the minimum
/// ensemble size, short horizon.  Runs in well under a second.
fn small_config() -> String {
    r#"{
        "schema_version": 1,
        "preset": "sk_state_dependent_gamma",
        "horizon": 0.25,
        "q0": [0.0],
        "p0": [0.0],
        "epsilons": [0.5, 0.25, 0.125, 0.0625],
        "n_paths": 100,
        "master_seed": 31415,
        "measure_kind": "finite_activity",
        "intensity": 2.0,
        "mark_law": {"law": "uniform", "lo": -0.15, "hi": 0.2},
        "thetas": [1.0],
        "deltas": [0.25]
    }"#
    .to_string()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).expect("write config");
    path
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn validate_accepts_good_config() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let output = Command::new(BIN)
        .args(["validate"])
        .arg(&config)
        .output()
        .expect("spawn");
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("is valid (hash "), "stdout: {}", stdout(&output));
}

#[test]
fn validate_rejects_bad_fields_with_full_list() {
    let dir = tempdir().unwrap();
    let bad = small_config()
        .replace("\"horizon\": 0.25", "\"horizon\": -1.0")
        .replace("\"n_paths\": 100", "\"n_paths\": 10");
    let config = write_config(dir.path(), &bad);
    let output = Command::new(BIN)
        .args(["validate"])
        .arg(&config)
        .output()
        .expect("spawn");
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert!(err.contains("is invalid:"), "stderr: {err}");
    assert!(err.contains("horizon"), "stderr must name horizon: {err}");
    assert!(err.contains("n_paths"), "stderr must name n_paths: {err}");
}

#[test]
fn validate_rejects_unknown_keys() {
    let dir = tempdir().unwrap();
    let bad = small_config().replace(
        "\"schema_version\": 1,",
        "\"schema_version\": 1, \"horizzon\": 2.0,",
    );
    let config = write_config(dir.path(), &bad);
    let output = Command::new(BIN)
        .args(["validate"])
        .arg(&config)
        .output()
        .expect("spawn");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("horizzon"), "stderr: {}", stderr(&output));
}

#[test]
fn presets_lists_known_models() {
    let output = Command::new(BIN).args(["presets"]).output().expect("spawn");
    assert!(output.status.success());
    let out = stdout(&output);
    for name in ["smoluchowski_kramers", "sk_state_dependent_gamma", "anharmonic"] {
        assert!(out.contains(name), "missing preset {name} in: {out}");
    }
}

#[test]
fn run_produces_complete_inventory() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    let output = Command::new(BIN)
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("spawn");
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("run complete: 5 files"), "stdout: {}", stdout(&output));

    let mut found: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    found.sort();
    assert_eq!(
        found,
        ["config.json", "manifest.json", "rates.json", "rates.svg", "sweep.csv"]
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let mut listed: Vec<String> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_owned())
        .collect();
    listed.sort();
    assert_eq!(listed, found, "manifest inventory must match the directory");
    assert_eq!(manifest["master_seed"], serde_json::json!(31415));
}

#[test]
fn run_is_deterministic_across_invocations_and_threads() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, threads) in [(&out_a, "1"), (&out_b, "2")] {
        let output = Command::new(BIN)
            .args(["run"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args(["--threads", threads])
            .output()
            .expect("spawn");
        assert!(output.status.success(), "stderr: {}", stderr(&output));
    }
    let csv_a = fs::read(out_a.join("sweep.csv")).unwrap();
    let csv_b = fs::read(out_b.join("sweep.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "sweep.csv must be byte-identical across thread counts");
    let rates_a = fs::read(out_a.join("rates.json")).unwrap();
    let rates_b = fs::read(out_b.join("rates.json")).unwrap();
    assert_eq!(rates_a, rates_b, "rates.json must be byte-identical across thread counts");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    let output = Command::new(BIN)
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "7"])
        .output()
        .expect("spawn");
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], serde_json::json!(7));
    assert_eq!(manifest["flags"]["seed"], serde_json::json!(7));
}

#[test]
fn out_dir_env_is_honored_and_flag_wins() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());

    let env_dir = dir.path().join("from-env");
    let output = Command::new(BIN)
        .args(["run"])
        .arg(&config)
        .env("SMALLMASS_OUT", &env_dir)
        .output()
        .expect("spawn");
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(env_dir.join("sweep.csv").exists(), "env out dir must receive artifacts");

    let flag_dir = dir.path().join("from-flag");
    let ignored = dir.path().join("ignored-env");
    let output = Command::new(BIN)
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&flag_dir)
        .env("SMALLMASS_OUT", &ignored)
        .output()
        .expect("spawn");
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(flag_dir.join("sweep.csv").exists());
    assert!(!ignored.exists(), "--out must take precedence over the environment");
}

#[test]
fn no_plots_suppresses_svg() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    let output = Command::new(BIN)
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .arg("--no-plots")
        .output()
        .expect("spawn");
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("run complete: 4 files"), "stdout: {}", stdout(&output));
    assert!(!out_dir.join("rates.svg").exists());
}

#[test]
fn refuses_out_dir_with_unrelated_files() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    fs::create_dir_all(&out_dir).unwrap();
    fs::write(out_dir.join("keep-me.txt"), "precious").unwrap();

    let output = Command::new(BIN)
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("spawn");
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("error:"), "stderr: {}", stderr(&output));
    assert_eq!(fs::read_to_string(out_dir.join("keep-me.txt")).unwrap(), "precious");
    assert!(!out_dir.join("sweep.csv").exists(), "no artifacts after refusal");
}
