use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lmf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmf"))
        .args(args)
        .current_dir(dir)
        .env_remove("LMF_SOLVER_TOL")
        .output()
        .expect("spawn lmf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn run_below_the_bound_passes() {
    let dir = TempDir::new().unwrap();
    let o = lmf(dir.path(), &["run", "--family", "werner", "--alpha", "0.40", "--mode", "lhs", "--level", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cert = read_json(&dir.path().join("certificate.json"));
    assert_eq!(cert["q_star"].as_f64(), Some(1.0));
    let report = read_json(&dir.path().join("certificate.report.json"));
    assert_eq!(report["pass"], Value::Bool(true));
    assert!(stdout(&o).contains("admits an LHS model"));
}

#[test]
fn run_singlet_level_one() {
    let dir = TempDir::new().unwrap();
    let o = lmf(dir.path(), &["run", "--family", "werner", "--alpha", "1", "--out", "w.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let q = read_json(&dir.path().join("w.json"))["q_star"].as_f64().unwrap();
    assert!((q - 0.43).abs() < 0.01, "q* = {q}");
    assert!(dir.path().join("w.report.json").exists());
}

#[test]
fn identical_runs_hash_identically() {
    let dir = TempDir::new().unwrap();
    for out in ["a.json", "b.json"] {
        let o = lmf(dir.path(), &["run", "--family", "rho-alpha-theta", "--alpha", "0.6", "--theta", "0.5", "--out", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    let (a, b) = (read_json(&dir.path().join("a.json")), read_json(&dir.path().join("b.json")));
    assert_eq!(a["content_hash"], b["content_hash"]);
}

#[test]
fn malformed_flags_write_nothing() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["run", "--family", "werner", "--alpha", "1.5"][..],
        &["run", "--family", "werner"],
        &["run", "--family", "no-such-family", "--alpha", "0.5"],
        &["run", "--family", "werner", "--alpha", "0.5", "--mode", "both"],
        &["run", "--family", "werner", "--alpha", "0.5", "--level", "9"],
        &["run", "--alpha", "0.5"],
        &["run", "--family", "werner", "--alpha", "0.5", "--tol", "-1"],
        &["run", "--family", "werner", "--alpha", "0.5", "--rotation", "1,2"],
        &["--jobs", "0", "catalog-list"],
        &["frobnicate"],
    ] {
        let o = lmf(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_solver_tol_env_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lmf"))
        .args(["run", "--family", "werner", "--alpha", "0.4"])
        .current_dir(dir.path())
        .env("LMF_SOLVER_TOL", "tiny")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_rows_and_errors() {
    let dir = TempDir::new().unwrap();
    let o = lmf(dir.path(), &["sweep", "--family", "rho-alpha-theta", "--grid", ""]);
    assert_eq!(o.status.code(), Some(1));

    let quarter = std::f64::consts::FRAC_PI_4.to_string();
    let o = lmf(dir.path(), &["sweep", "--family", "rho-alpha-theta", "--grid", &quarter, "--out", "s.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("family,mode,level,theta,alpha_bound,q_star,eta,runtime_s"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "rho-alpha-theta");
    let alpha: f64 = row[4].parse().unwrap();
    assert!((0.42..=0.44).contains(&alpha), "α = {alpha}");

    let o = lmf(dir.path(), &["sweep", "--family", "qubit-qudit", "--grid", "2", "--method", "direct"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("qubit-qudit:d=2,lhs,1,,"));
}

#[test]
fn shrink_named_sets() {
    let dir = TempDir::new().unwrap();
    let ico = ((5.0 + 2.0 * 5f64.sqrt()) / 15.0).sqrt();
    for (set, want) in [("icosahedron", ico), ("cube", 1.0 / 3f64.sqrt())] {
        let o = lmf(dir.path(), &["shrink", "--set", set]);
        assert_eq!(o.status.code(), Some(0));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        let eta = v["eta"].as_f64().unwrap();
        assert!((eta - want).abs() < 1e-9, "{set}: {eta}");
    }
    let o = lmf(dir.path(), &["shrink", "--level", "2", "--out", "l2.json"]);
    assert_eq!(o.status.code(), Some(0));
    let eta = read_json(&dir.path().join("l2.json"))["eta"].as_f64().unwrap();
    assert!((eta - 0.923).abs() < 2e-3);
    assert_eq!(lmf(dir.path(), &["shrink"]).status.code(), Some(1));
    assert_eq!(lmf(dir.path(), &["shrink", "--set", "cube", "--continuous", "povmX"]).status.code(), Some(1));
}

#[test]
fn verify_fresh_tampered_missing() {
    let dir = TempDir::new().unwrap();
    let o = lmf(dir.path(), &["run", "--family", "werner", "--alpha", "0.5", "--out", "c.json"]);
    assert_eq!(o.status.code(), Some(0));
    let o = lmf(dir.path(), &["verify", "c.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("(q* = "));

    let mut cert = read_json(&dir.path().join("c.json"));
    let q = cert["q_star"].as_f64().unwrap();
    cert["q_star"] = Value::from(q - 1e-3);
    std::fs::write(dir.path().join("t.json"), cert.to_string()).unwrap();
    let o = lmf(dir.path(), &["verify", "t.json", "--report", "t.report.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(read_json(&dir.path().join("t.report.json"))["pass"], Value::Bool(false));

    std::fs::write(dir.path().join("junk.json"), "{\"schema\": 3}").unwrap();
    assert_eq!(lmf(dir.path(), &["verify", "junk.json"]).status.code(), Some(3));
    assert_eq!(lmf(dir.path(), &["verify", "absent.json"]).status.code(), Some(1));
}

#[test]
fn lhv_run_verifies() {
    let dir = TempDir::new().unwrap();
    let o = lmf(dir.path(), &["run", "--family", "werner", "--alpha", "1", "--mode", "lhv", "--out", "v.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("on both sides"));
    assert_eq!(lmf(dir.path(), &["verify", "v.json"]).status.code(), Some(0));
}

#[test]
fn catalog_lists_families() {
    let dir = TempDir::new().unwrap();
    let o = lmf(dir.path(), &["catalog-list"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for name in ["werner", "rho-alpha-theta", "qubit-qudit", "horodecki-bound-entangled", "non-full-rank"] {
        assert!(out.contains(name), "{name}");
    }
}
