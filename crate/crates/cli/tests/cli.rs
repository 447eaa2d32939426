use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const DOUBLING: &str = r#"{"map":{"dim":1,"A":[[2]],"modes":[]}}"#;
const EPS005: &str = r#"{"map":{"dim":1,"A":[[2]],"modes":[{"i":1,"m":[1],"sin":0.05}]},"flow":{"max_steps":8}}"#;
const EPS02: &str = r#"{"map":{"dim":1,"A":[[2]],"modes":[{"i":1,"m":[1],"sin":0.2}]}}"#;

fn srbflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srbflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(configs: &[(&str, &str)]) -> TempDir {
    let dir = TempDir::new().unwrap();
    for (name, body) in configs {
        fs::write(dir.path().join(name), body).unwrap();
    }
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn entropy_of_doubling() {
    let dir = setup(&[("doubling.json", DOUBLING)]);
    let o = srbflow(dir.path(), &["entropy", "--config", "doubling.json"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("0.693147"), "{}", stdout(&o));
}

#[test]
fn entropy_fd_report() {
    let dir = setup(&[("c.json", EPS005)]);
    let o = srbflow(dir.path(), &["entropy", "--config", "c.json", "--fd", "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["fd"]["error_h"].as_f64().unwrap() < 1e-5);
    let order = v["fd"]["order"].as_f64().unwrap();
    assert!((1.7..2.3).contains(&order));
}

#[test]
fn density_outputs() {
    let dir = setup(&[("c.json", EPS005)]);
    let o = srbflow(dir.path(), &["density", "--config", "c.json", "--out", "res"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("res/density.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,rho"));
    assert_eq!(lines.count(), 256);
    assert!(!csv.contains('\r'));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("res/density.json")).unwrap()).unwrap();
    assert!((v["integral"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(v["min"].as_f64().unwrap() > 0.9);
    assert!(v["iterations"].as_u64().unwrap() > 0);
}

#[test]
fn gradient_json() {
    let dir = setup(&[("c.json", EPS005)]);
    let o = srbflow(dir.path(), &["gradient", "--config", "c.json", "--check-response"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/gradient.json")).unwrap()).unwrap();
    assert!(v["pairing_check"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["modes"].as_array().unwrap().len(), 9);
    assert!(v["response_check"]["error_h"].as_f64().unwrap() < 1e-4);
}

#[test]
fn flow_trace_columns_and_determinism() {
    let dir = setup(&[("c.json", EPS005)]);
    let o = srbflow(dir.path(), &["flow", "--config", "c.json", "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "MaxSteps");
    assert_eq!(v["final_map"]["modes"][1]["i"], 1);
    let first = fs::read(dir.path().join("out/flow.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().next(), Some("t,entropy,grad_norm,mu_min,eta_hat,dt,accepted"));
    let h: Vec<f64> = text
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",1"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(h.windows(2).all(|w| w[1] >= w[0]));

    let o = srbflow(dir.path(), &["flow", "--config", "c.json"]);
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("out/flow.csv")).unwrap(), first);
}

#[test]
fn uncertified_flow_writes_failed_outputs() {
    let dir = setup(&[("eps02.json", EPS02)]);
    let o = srbflow(dir.path(), &["flow", "--config", "eps02.json"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("ExpansionLost"));
    assert!(dir.path().join("out/flow.csv.failed").exists());
    assert!(!dir.path().join("out/flow.csv").exists());
}

#[test]
fn backward_flow() {
    let dir = setup(&[("c.json", EPS005)]);
    let o = srbflow(dir.path(), &["flow", "--config", "c.json", "--backward", "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["final_entropy"].as_f64().unwrap() < v["initial_entropy"].as_f64().unwrap());
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = setup(&[("nomap.json", "{}"), ("grid.json", r#"{"numerics":{"grid_size":100}}"#)]);
    let o = srbflow(dir.path(), &["entropy", "--config", "nomap.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("map: required"));
    let o = srbflow(dir.path(), &["density", "--config", "grid.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid_size: must be a power of two"));
    let o = srbflow(dir.path(), &["density", "--config", "missing.json"]);
    assert!(!o.status.success());
    let o = srbflow(dir.path(), &["density"]);
    assert!(!o.status.success());
}

#[test]
fn verify_json_lists_suites() {
    let dir = setup(&[("doubling.json", DOUBLING)]);
    let o = srbflow(dir.path(), &["verify", "--config", "doubling.json", "--json"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["seed"], 0);
    let suites = v["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 9);
    assert!(suites.iter().all(|s| s["passed"] == true && s["max_residual"].is_number()));
}

#[test]
fn spectral_lab_table() {
    let dir = TempDir::new().unwrap();
    let o = srbflow(dir.path(), &["spectral-lab", "--seed", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("seed 3"));
    assert_eq!(out.lines().filter(|l| l.starts_with("pass")).count(), 7);
}

#[test]
fn thread_cap_is_honored() {
    let dir = setup(&[("c.json", EPS005)]);
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_srbflow"))
            .current_dir(dir.path())
            .env("SRBFLOW_THREADS", threads)
            .args(["entropy", "--config", "c.json"])
            .output()
            .unwrap();
        assert!(o.status.success());
        stdout(&o)
    };
    assert_eq!(run("1"), run("0"));
    let o = Command::new(env!("CARGO_BIN_EXE_srbflow"))
        .current_dir(dir.path())
        .env("SRBFLOW_THREADS", "many")
        .args(["entropy", "--config", "c.json"])
        .output()
        .unwrap();
    assert!(!o.status.success());
}
