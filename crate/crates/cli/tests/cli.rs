//! Exit codes and output files of the `emff` binary.

use std::process::Command;

fn emff() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emff"))
}

#[test]
fn run_succeeds_and_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = emff()
        .args(["run", "paper_fig123", "--duration", "0.05", "--seed", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("trajectory.csv").is_file());
    assert!(String::from_utf8_lossy(&out.stdout).contains("error_ratio"));
}

#[test]
fn missing_scenario_is_a_validation_error() {
    let out = emff().args(["run", "no/such/file.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_scenario_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "name = \"x\"\n[swarm]\nsatellites = []\n").unwrap();
    let out = emff().arg("check").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_seed_range_is_a_validation_error() {
    let out = emff().args(["sweep", "paper_fig123", "--seeds", "5..2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonpositive_step_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = emff().args(["run", "paper_fig123", "--dt", "0", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn numerical_failure_exits_with_three() {
    // The bundled scenario drives the satellites toward a common point, so
    // the dipoles needed to realize the command exceed the coil limits.
    let dir = tempfile::tempdir().unwrap();
    let out = emff()
        .args(["run", "paper_fig123", "--mode", "dipole", "--duration", "0.01", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("abort.txt").is_file());
}

#[test]
fn check_prints_a_report() {
    let out = emff().args(["check", "paper_fig123", "--samples", "1", "--seed", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("# emff-controllability v1"));
    assert!(text.contains("rank = 27"));
}

#[test]
fn sweep_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = emff()
        .args(["sweep", "paper_fig123", "--seeds", "0..=2", "--duration", "0.02", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
