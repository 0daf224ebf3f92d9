//! Runs the binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpcopula"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr_error(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("JSON on stderr");
    assert!(v["error"]["message"].is_string());
    v
}

/// Writes a physical-scale data set with exponential margins.
fn write_data(dir: &Path) -> std::path::PathBuf {
    let sim = dir.join("u.csv");
    let out = run(&[
        "simulate", "--family", "logistic", "--p", "2", "--dim", "2", "--margins", "copula-scale", "-n", "3000",
        "--seed", "4", "--out", sim.to_str().unwrap(),
    ]);
    stdout_json(&out);
    let text = fs::read_to_string(&sim).unwrap();
    let mut data = String::from("day,x,y\n");
    for (i, line) in text.lines().skip(1).enumerate() {
        let u: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let day = 1 + i % 28;
        let month = 1 + (i / 28) % 12;
        data.push_str(&format!("2019-{month:02}-{day:02},{},{}\n", -10.0 * (1.0 - u[0]).ln(), -3.0 * (1.0 - u[1]).ln()));
    }
    let path = dir.join("data.csv");
    fs::write(&path, data).unwrap();
    path
}

#[test]
fn dnorm_subcommand() {
    let v = stdout_json(&run(&["dnorm", "--family", "logistic", "--p", "2", "--dim", "4", "--x", "1,1,1,1"]));
    assert!((v["norm"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    let v = stdout_json(&run(&["dnorm", "--family", "constant-one", "--dim", "3", "--x", "0.2,0.5,0.1"]));
    assert_eq!(v["norm"].as_f64().unwrap(), 0.5);
    assert_eq!(v["dual"].as_f64().unwrap(), 0.1);
}

#[test]
fn simulate_writes_csv_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s.csv");
    let args = ["simulate", "--family", "constant-one", "--dim", "3", "-n", "50", "--margins", "copula-scale", "--out"];
    let mut a: Vec<&str> = args.to_vec();
    a.push(out.to_str().unwrap());
    stdout_json(&run(&a));
    let first = fs::read(&out).unwrap();
    let side: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("s.csv.json")).unwrap()).unwrap();
    assert_eq!(side["exact_gpc"], true);
    assert_eq!(side["rows"], 50);
    stdout_json(&run(&a));
    assert_eq!(first, fs::read(&out).unwrap(), "same seed, same bytes");
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,x3");
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn simulate_rejects_unbounded_generator_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s.csv");
    let e = stderr_error(&run(&[
        "simulate", "--family", "logistic", "--p", "2", "--dim", "2", "-n", "10", "--margins", "copula-scale",
        "--generator-bound", "10", "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(e["error"]["kind"], "parameter");
}

#[test]
fn fit_margin_and_estimate_joint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_data(tmp.path());
    let stab = tmp.path().join("stab.csv");
    let v = stdout_json(&run(&[
        "fit-margin", "-i", data.to_str().unwrap(), "--column", "x", "--threshold", "15", "--target", "30,46",
        "--stability-out", stab.to_str().unwrap(),
    ]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for (r, y) in rows.iter().zip([30.0, 46.0]) {
        let want = 1.0 - (-y / 10.0f64).exp();
        assert!((r["p0"].as_f64().unwrap() - want).abs() < 0.01, "{r}");
        assert_eq!(r["threshold"], y);
    }
    let stab_text = fs::read_to_string(&stab).unwrap();
    assert!(stab_text.starts_with("threshold,n_exceed,sigma,xi,modified_scale,se_xi"));

    let scan = tmp.path().join("scan.csv");
    let v = stdout_json(&run(&[
        "estimate-joint", "-i", data.to_str().unwrap(), "--columns", "x,y", "--x0", "0.99,0.99", "--grid-size", "50",
        "--scan-out", scan.to_str().unwrap(),
    ]));
    assert_eq!(v["q_hat"].as_f64().unwrap(), v["t0"].as_f64().unwrap() * v["p_hat"].as_f64().unwrap());
    assert_eq!(fs::read_to_string(&scan).unwrap().lines().count(), 51);

    let e = stderr_error(&run(&["estimate-joint", "-i", data.to_str().unwrap(), "--columns", "x,z", "--x0", "0.9,0.9"]));
    assert_eq!(e["error"]["kind"], "unknown_column");
    let e = stderr_error(&run(&["estimate-joint", "-i", data.to_str().unwrap(), "--columns", "x,y", "--x0", "0.9,1"]));
    assert_eq!(e["error"]["kind"], "degenerate_coordinate");
}

#[test]
fn case_study_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_data(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{
          "margins": [{"column": "x", "gpd_threshold": 15.0}, {"column": "y", "gpd_threshold": 4.5}],
          "scenarios": [
            {"name": "both", "thresholds": {"x": 40.0, "y": 12.0}},
            {"name": "x only", "thresholds": {"x": 40.0}},
            {"name": "low y", "thresholds": {"x": 40.0, "y": 1.0}}
          ],
          "grid_size": 80,
          "ingest": {"date_column": "day"}
        }"#,
    )
    .unwrap();
    let dirs = [tmp.path().join("o1"), tmp.path().join("o2")];
    for d in &dirs {
        let out = run(&[
            "case-study", "-i", data.to_str().unwrap(), "-c", cfg.to_str().unwrap(), "--out-dir", d.to_str().unwrap(),
            "--seed", "9",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("excluded: not extreme in y"), "{text}");
    }
    for f in ["summary.json", "scans/both.csv", "scans/x_only.csv", "margins/x.json", "margins/y.json"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    let summary: Value = serde_json::from_str(&fs::read_to_string(dirs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["settings"]["seed"], 9);
    assert_eq!(summary["settings"]["grid_size"], 80);

    // a summer-only run keeps four months of the synthetic calendar
    let d = tmp.path().join("o3");
    let out = run(&[
        "case-study", "-i", data.to_str().unwrap(), "-c", cfg.to_str().unwrap(), "--out-dir", d.to_str().unwrap(),
        "--season", "summer",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["dataset"]["season"], "summer");
    assert!(summary["dataset"]["n"].as_u64().unwrap() < 1100);
}

#[test]
fn diagnose_subcommand() {
    let v = stdout_json(&run(&["diagnose", "--family", "husler-reiss", "--sigma", "1", "-n", "200000"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!((rows[2]["raw"][0].as_f64().unwrap() - 1.0).abs() < 0.15);
}

#[test]
fn errors_are_machine_readable() {
    let e = stderr_error(&run(&["fit-margin", "-i", "/nonexistent.csv", "--column", "x", "--threshold", "1"]));
    assert_eq!(e["error"]["kind"], "io");
    let e = stderr_error(&run(&["dnorm", "--family", "logistic", "--p", "0.5", "--dim", "2", "--x", "1,1"]));
    assert_eq!(e["error"]["kind"], "parameter");
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "usage");
    assert!(run(&["--help"]).status.success());
}
