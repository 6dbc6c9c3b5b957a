mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::TINY;
use mqs_cli::exit_code;

fn mqs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqs")).args(args).output().expect("mqs runs")
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn successful_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), TINY);
    let out = dir.path().join("out");
    let res = mqs(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(exit_code::SUCCESS), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("explicit.csv").exists());
    assert!(out.join("explicit_summary.json").exists());
}

#[test]
fn missing_field_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), &TINY.replace("t_end = 2e-3", ""));
    let res = mqs(&["cfl", "--config", &config]);
    assert_eq!(res.status.code(), Some(exit_code::CONFIG));
    assert!(String::from_utf8_lossy(&res.stderr).contains("t_end"));
}

#[test]
fn forced_unstable_step_exits_with_instability_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), TINY);
    let out = dir.path().join("out");
    let res = mqs(&["run", "--config", &config, "--out", out.to_str().unwrap(), "--dt-override", "1e-4"]);
    assert_eq!(res.status.code(), Some(exit_code::INSTABILITY));
    assert!(String::from_utf8_lossy(&res.stderr).to_lowercase().contains("instability"));
}

#[test]
fn cfl_prints_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), TINY);
    let res = mqs(&["cfl", "--config", &config]);
    assert_eq!(res.status.code(), Some(exit_code::SUCCESS));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(report["dt_cfl"].as_f64().unwrap() > 0.0);
}
