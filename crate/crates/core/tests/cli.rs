use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use bscsynth::io::ControllerSetDoc;
use bscsynth::scenario::builtin_benchmark;
use bscsynth::synth::{verify_certificate, BscOptions};
use bscsynth::sysmodel::discretize;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bscsynth")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

/// One `synth ipd --deadline 2.5` shared by the tests below.
fn ipd_synth() -> &'static (TempDir, Output) {
    static CELL: OnceLock<(TempDir, Output)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let out = run(&["synth", "ipd", "--deadline", "2.5", "--out", dir.path().to_str().unwrap()]);
        (dir, out)
    })
}

fn controllers_file() -> PathBuf {
    ipd_synth().0.path().join("ipd_controllers.json")
}

#[test]
fn synth_ipd_finds_feasible_periods() {
    let (_, out) = ipd_synth();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(out);
    assert!(!summary["feasible_periods"].as_array().unwrap().is_empty());
    assert!(controllers_file().exists());
}

#[test]
fn verify_accepts_synthesized_and_rejects_tampered() {
    let out = run(&["verify", controllers_file().to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["passed"], Value::Bool(true));

    let dir = TempDir::new().unwrap();
    let mut doc = ControllerSetDoc::read(&controllers_file()).unwrap();
    doc.controllers[0].k[0][0] *= 1.5;
    let tampered = dir.path().join("tampered.json");
    doc.write(&tampered).unwrap();
    let out = run(&["verify", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["passed"], Value::Bool(false));

    let mut doc = ControllerSetDoc::read(&controllers_file()).unwrap();
    doc.controllers[1].c *= 1.01;
    doc.write(&tampered).unwrap();
    assert_eq!(run(&["verify", tampered.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn round_trip_reproduces_certificates_bit_for_bit() {
    let def = builtin_benchmark("ipd").unwrap();
    let fresh = def.sweep(2.5, &BscOptions::default()).unwrap().controllers;
    let read = ControllerSetDoc::read(&controllers_file()).unwrap().to_controllers().unwrap();
    assert_eq!(fresh.len(), read.len());
    for (a, b) in fresh.iter().zip(&read) {
        assert_eq!(a, b);
        let lp = discretize(&def.plant, a.h).unwrap();
        let (ra, rb) = (verify_certificate(a, &lp, &def.sor), verify_certificate(b, &lp, &def.sor));
        assert_eq!(ra, rb);
        assert!(rb.passed());
    }
    let text = std::fs::read_to_string(controllers_file()).unwrap();
    let again = ControllerSetDoc::from_json(&text).unwrap().to_json().unwrap();
    assert_eq!(again.trim_end(), text.trim_end());
}

fn feasibility_table(path: &Path) -> Vec<(f64, f64, bool, Option<f64>)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2] == "true", f[3].parse().ok())
        })
        .collect()
}

#[test]
fn feasibility_is_monotone_in_the_deadline() {
    let rows = feasibility_table(&ipd_synth().0.path().join("ipd_feasibility.csv"));
    let deadlines: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.1.to_bits()).collect();
    assert!(deadlines.len() >= 2);
    for a in &rows {
        for b in rows.iter().filter(|b| b.0 == a.0 && b.1 > a.1) {
            assert!(!a.2 || b.2, "period {} ms feasible at {} s but not at {} s", a.0, a.1, b.1);
            if let (Some(ra), Some(rb)) = (a.3, b.3) {
                assert!(rb <= ra);
            }
        }
    }
}

#[test]
fn simulate_from_preferred_region_recovers_at_zero() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "simulate",
        "ipd",
        "--controllers",
        controllers_file().to_str().unwrap(),
        "--x0",
        "0.05,0,-0.05,0",
        "--seed",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["summary"]["recovered_at"], serde_json::json!(0.0));
    let csv = std::fs::read_to_string(dir.path().join("ipd_x0_4.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,x_2,x_3,x_4,u_1,controller_id,period_ms,glbf,util\n"));
    assert!(dir.path().join("ipd_x0_4_summary.json").exists());
}

#[test]
fn simulate_rejects_unrecoverable_start_and_sweep_reports_batch() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let c = controllers_file();
    let out = run(&["simulate", "ipd", "--controllers", c.to_str().unwrap(), "--x0", "0.49,0.49,0.34,0.34", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "precondition");

    let out = run(&["sweep", "ipd", "--controllers", c.to_str().unwrap(), "--runs", "8", "--seed", "9", "--out", d]);
    assert!(out.status.success());
    let s = stdout_json(&out);
    assert_eq!(s["n_runs"], 8);
    assert_eq!(s["violations_count"], 0);
    assert!(dir.path().join("ipd_sweep_9.json").exists());
}

#[test]
fn errors_are_machine_readable() {
    let out = run(&["synth", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("unknown benchmark"));

    let out = run(&["synth", "ipd", "--benchmark", "ald"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["simulate", "ipd", "--x0", "0.1,zero"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn custom_config_with_preferred_region_outside_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{
  "plant": {"phi": [[0.0, 1.0], [2.0, 0.0]], "gamma": [[0.0], [1.0]]},
  "sor": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]},
  "por": {"lo": [-0.5, -0.5], "hi": [1.5, 0.5]},
  "periods": {"h0": 0.02, "h_max": 0.1},
  "deadline_s": 2.0,
  "budget": [{"t": 0.0, "u": 1.0}]
}"#,
    )
    .unwrap();
    let out = run(&["synth", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn custom_config_synthesizes_and_verifies() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("pend.json");
    std::fs::write(
        &path,
        r#"{
  "plant": {"phi": [[0.0, 1.0], [2.0, 0.0]], "gamma": [[0.0], [1.0]]},
  "sor": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]},
  "por": {"A": [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], "b": [0.2, 0.2, 0.2, 0.2]},
  "periods": {"h0": 0.02, "h_max": 0.1},
  "deadline_s": 2.0,
  "budget": [{"t": 0.0, "u": 1.0}]
}"#,
    )
    .unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["synth", "--config", path.to_str().unwrap(), "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = dir.path().join("custom_controllers.json");
    let out = run(&["verify", file.to_str().unwrap(), "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    // A custom file cannot be checked against a built-in benchmark it was not made for.
    let out = run(&["verify", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
