use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use staticnoise::generator::asymptotic_state;
use staticnoise::models::QubitModel;
use tempfile::TempDir;

const SMALL_QUBIT: &str = r#"
name = "small"
method = "both"
seed = 11
n_real = 3000

[model]
kind = "qubit"
lambda0 = 10.0
sigma = 1.0
alpha = 1.0

[time]
t_max = 1.0
dt = 0.05
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_staticnoise"))
}

fn run_config(dir: &Path, text: &str, out: &str, threads: &str) -> Output {
    let cfg = dir.join("cfg.toml");
    fs::write(&cfg, text).unwrap();
    bin()
        .env("STATICNOISE_THREADS", threads)
        .args(["run", cfg.to_str().unwrap(), "--out", dir.join(out).to_str().unwrap()])
        .output()
        .unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    assert!(run_config(tmp.path(), SMALL_QUBIT, "a", "1").status.success());
    assert!(run_config(tmp.path(), SMALL_QUBIT, "b", "2").status.success());
    for file in ["trajectory.csv", "states_me.csv", "states_mc.csv", "summary.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
}

#[test]
fn summary_matches_rows_and_independent_asymptote() {
    let tmp = TempDir::new().unwrap();
    assert!(run_config(tmp.path(), SMALL_QUBIT, "r", "1").status.success());
    let dir = tmp.path().join("r");
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let traj = dir.join("trajectory.csv");
    let times = column(&traj, "t");
    assert_eq!(times.len(), 21);
    assert_eq!(summary["n_times"].as_u64(), Some(21));

    let fid = column(&traj, "fidelity");
    let min_fid = fid.iter().copied().fold(f64::INFINITY, f64::min);
    assert!((summary["min_fidelity"].as_f64().unwrap() - min_fid).abs() <= 1e-12);
    let dev = column(&traj, "purity_deviation");
    let max_dev = dev.iter().copied().fold(0.0, f64::max);
    assert!((summary["max_purity_deviation"].as_f64().unwrap() - max_dev).abs() <= 1e-12);
    let coh = column(&traj, "coherence_me");
    assert!((summary["final_coherence"].as_f64().unwrap() - coh[coh.len() - 1]).abs() <= 1e-12);

    let bundle = QubitModel { lambda0: 10.0, sigma: 1.0, alpha: 1.0 }.build().unwrap();
    let rho = asymptotic_state(&bundle.ensemble.mean_hamiltonian(), &bundle.rho0).unwrap();
    assert!((summary["asymptotic_coherence"].as_f64().unwrap() - rho.total_coherence()).abs() <= 1e-10);
}

#[test]
fn non_positive_sigma_names_the_invariant() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(tmp.path(), &SMALL_QUBIT.replace("sigma = 1.0", "sigma = -0.5"), "r", "1");
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "invalid_parameter");
    assert!(err["error"]["message"].as_str().unwrap().contains("sigma"));
    assert!(!tmp.path().join("r").join("trajectory.csv").exists());
}

#[test]
fn malformed_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(tmp.path(), "name = 3", "r", "1");
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "config");
}

#[test]
fn comparing_a_run_with_itself_is_perfect() {
    let tmp = TempDir::new().unwrap();
    assert!(run_config(tmp.path(), SMALL_QUBIT, "r", "1").status.success());
    let dir = tmp.path().join("r");
    let csv = tmp.path().join("cmp.csv");
    let out = bin()
        .args(["compare", dir.to_str().unwrap(), dir.to_str().unwrap(), "--csv", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["breaches"].as_array().unwrap().is_empty());
    for f in column(&csv, "fidelity") {
        assert!((f - 1.0).abs() < 1e-9, "fidelity {f}");
    }
    for p in column(&csv, "purity_ratio") {
        assert_eq!(p, 1.0);
    }
}

#[test]
fn compare_rejects_different_grids() {
    let tmp = TempDir::new().unwrap();
    assert!(run_config(tmp.path(), SMALL_QUBIT, "a", "1").status.success());
    assert!(run_config(tmp.path(), &SMALL_QUBIT.replace("dt = 0.05", "dt = 0.1"), "b", "1").status.success());
    let out = bin()
        .args(["compare", tmp.path().join("a").to_str().unwrap(), tmp.path().join("b").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "grid_mismatch");
}

#[test]
fn bundled_configs_validate() {
    let list = bin().arg("list-bundled").output().unwrap();
    assert!(list.status.success());
    let names: Vec<String> = String::from_utf8(list.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    assert!(names.len() >= 7);
    for name in names {
        let out = bin().args(["validate", "--bundled", &name]).output().unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let resolved: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(resolved["name"], name.as_str());
    }
    let missing = bin().args(["validate", "--bundled", "nope"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(tmp.path(), SMALL_QUBIT, "r", "zero");
    assert_eq!(out.status.code(), Some(1));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("STATICNOISE_THREADS"));
}
