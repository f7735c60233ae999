//! End-to-end runs of the binary: exit codes and output formats.

use chaplygin::cli::{read_csv, CSV_HEADER};
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaplygin"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("chaplygin-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn config(name: &str, json: &str) -> PathBuf {
    let p = scratch(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn simulate_writes_csv_and_summary() {
    let cfg = config("sim.json", r#"{"span": {"t1": 1.0}}"#);
    let out = scratch("traj.csv");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert!(rows.len() > 2);
    let field = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").len(), 17);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary["rows"].as_u64().unwrap() as usize, rows.len());
    assert!(summary["drift"]["energy"].as_f64().unwrap() < 1e-8);
    assert!(summary["runtime_seconds"].as_f64().is_some());
}

#[test]
fn simulate_zero_span_and_stdout() {
    let cfg = config("zero.json", r#"{"span": {"t0": 0, "t1": 0}}"#);
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rows = read_csv(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
}

#[test]
fn malformed_config_exits_2() {
    let cfg = config("bad.json", "{ not json");
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["verify", "--config", "/nonexistent/cfg.json"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn unknown_group_exits_2() {
    let cfg = config("group.json", r#"{"group": "everything"}"#);
    assert_eq!(code(&run(&["verify", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn verify_geometry_passes_and_zero_tolerance_fails() {
    let cfg = config("geo.json", r#"{"group": "geometry"}"#);
    let out = scratch("geo-report.json");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--parallel"]);
    assert_eq!(code(&o), 0);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rep["pass"], serde_json::Value::Bool(true));
    let check = &rep["criteria"][0]["checks"][0];
    assert!(check["name"].is_string() && check["measured"].is_number() && check["tolerance"].is_number());
    let cfg = config("geo0.json", r#"{"group": "geometry", "tolerances": {"*": 0}}"#);
    assert_eq!(code(&run(&["verify", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn reduce_outputs_and_vertical_failure() {
    let cfg = config("red.json", r#"{"level": {"j": [2, 0, 1], "energy": 1}}"#);
    let o = run(&["reduce", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((rep["plus"]["energy_tilde"].as_f64().unwrap() - 2.780776).abs() < 1e-6);
    let cfg = config("vert.json", r#"{"level": {"j": [0, 0, 3], "energy": 1}}"#);
    let o = run(&["reduce", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("vertical moment"));
}

#[test]
fn integration_failure_exits_3() {
    let cfg = config("steps.json", r#"{"integrator": {"max_steps": 3}}"#);
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap()])), 3);
}
