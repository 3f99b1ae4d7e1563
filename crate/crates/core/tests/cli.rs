//! End-to-end runs of the `tbdoa` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tbdoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbdoa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn rmse_sweep_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tbdoa(&[
        "rmse-sweep",
        "--trials",
        "3",
        "--snr-grid",
        "0,20",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("rmse.csv");
    assert_eq!(header(&csv), "snr_db,rmse_deg,trials,failures");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "rmse-sweep");
    assert_eq!(manifest["config"]["trials"], 3);
    assert_eq!(manifest["seeds"]["master_seed"], 2024);
}

#[test]
fn resolution_sweep_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tbdoa(&[
        "resolution-sweep",
        "--trials",
        "3",
        "--targets",
        "10,11",
        "--snr-grid",
        "20",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&dir.path().join("resolution.csv")),
        "snr_db,prob_resolution,trials,failures"
    );
}

#[test]
fn single_shot_writes_roots_and_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tbdoa(&["single-shot", "--snr", "5", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let roots = fs::read_to_string(dir.path().join("roots.csv")).unwrap();
    assert_eq!(roots.lines().next().unwrap(), "target,re,im,abs,selected");
    // 2(M−1) = 18 roots per target
    assert_eq!(roots.lines().count(), 1 + 2 * 18);
    assert_eq!(
        header(&dir.path().join("pattern.csv")),
        "target,theta_deg,power_db"
    );
    let est: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("estimates.json")).unwrap()).unwrap();
    for key in ["snr_db", "truth_deg", "als", "estimates"] {
        assert!(est.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn simulate_then_estimate_recovers_scene() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let est = dir.path().join("est");
    let o = tbdoa(&[
        "simulate",
        "--snr",
        "inf",
        "--targets",
        "-20,5",
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tensor = sim.join("tensor.csv");
    assert_eq!(header(&tensor), "k,n,q,re,im");
    let o = tbdoa(&[
        "estimate",
        "--tensor",
        tensor.to_str().unwrap(),
        "--targets",
        "-20,5",
        "--out",
        est.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut angles: Vec<f64> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    angles.sort_by(f64::total_cmp);
    assert_eq!(angles.len(), 2);
    assert!(
        (angles[0] + 20.0).abs() < 1e-3 && (angles[1] - 5.0).abs() < 1e-3,
        "{angles:?}"
    );
}

#[test]
fn beampattern_peaks_in_sector() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tbdoa(&["beampattern", "--out", out]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("beampattern.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    let peak = rows.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!(peak.0.abs() <= 15.0);
}

#[test]
fn invalid_config_exits_with_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[beamspace]\nK = 20\n[array]\nM = 10\n").unwrap();
    let out = dir.path().join("out");
    let o = tbdoa(&[
        "single-shot",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["status"], "error");
    assert_eq!(rec["module"], "cli");
    assert!(out.join("error.json").exists());
}

#[test]
fn estimate_without_tensor_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = tbdoa(&["estimate", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let rec: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["command"], "estimate");
}

#[test]
fn empty_config_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.ini");
    fs::write(&cfg, "").unwrap();
    let o = tbdoa(&[
        "rmse-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--print-config",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for line in [
        "M = 10",
        "N = 10",
        "K = 4",
        "Q = 64",
        "d_t = 0.5",
        "trials = 500",
    ] {
        assert!(text.contains(line), "missing {line}");
    }
}

#[test]
fn snr_flag_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.ini");
    fs::write(&cfg, "[simulation]\nsnr_db = 20\n").unwrap();
    let o = tbdoa(&[
        "single-shot",
        "--config",
        cfg.to_str().unwrap(),
        "--snr",
        "5",
        "--print-config",
    ]);
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .contains("snr_db = 5.0"));
}
