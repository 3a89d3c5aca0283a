use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn srheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srheat")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn flag_prints_the_heisenberg_line() {
    let o = srheat(&["flag", "--corpus", "heisenberg"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "{\"growth_vector\":[2,3],\"weights\":[1,1,2],\"r\":2,\"Q\":4}\n");
}

#[test]
fn corpus_lists_at_least_five_models() {
    let o = srheat(&["corpus"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().lines().count() >= 5);
}

#[test]
fn model_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", srheat_cli::model::corpus_source("martinet").unwrap());
    let o = srheat(&["flag", "--model", &m]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["Q"], 5);
}

#[test]
fn input_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = write(dir.path(), "c.json", "{\"no_such_key\": 1}");
    let bad_model = write(dir.path(), "m.json", "{\"name\": \"x\"}");
    for args in [
        vec!["flag"],
        vec!["flag", "--corpus", "nope"],
        vec!["flag", "--model", &bad_model],
        vec!["verify", "--corpus", "grushin_k1", "--check", "limits"],
        vec!["verify", "--corpus", "grushin_k1", "--check", "coercivity", "--config", &bad_cfg],
        vec!["verify", "--corpus", "grushin_k1", "--check", "coercivity", "--tolerance-scale", "-1"],
        vec!["bogus"],
    ] {
        assert_eq!(code(&srheat(&args)), 2, "{args:?}");
    }
    // Monte Carlo without a seed is refused rather than seeded silently
    let o = srheat(&["simulate", "--corpus", "euclidean1", "--config", &write(dir.path(), "mc.json", "{\"simulate\": {\"method\": \"mc\"}}")]);
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_srheat"))
        .args(["verify", "--corpus", "grushin_k1", "--check", "coercivity"])
        .env("SRHEAT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", "{\"coercivity\": {\"points\": 200, \"expected_min\": 2.0}}");
    let o = srheat(&["verify", "--corpus", "grushin_k1", "--check", "coercivity", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("FAIL coercivity"));
}

#[test]
fn numerical_failure_exits_with_three_and_keeps_earlier_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // ten nearly equal eps values make the order-6 fit ill-conditioned
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"fd": {"spacing": [0.1], "dt": 0.01}, "expansion": {"eps0": 0.01, "levels": 5, "order": 6}, "coercivity": {"points": 50}}"#,
    );
    let o = srheat(&["verify", "--corpus", "euclidean1", "--check", "coercivity,expansion", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("coercivity.json").exists());
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["exit_code"], 3);
    assert!(summary["checks"][1]["error"].as_str().unwrap().contains("expansion"));
}

#[test]
fn limit_on_the_line_gives_the_gaussian_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write(dir.path(), "c.json", r#"{"limit": {"methods": ["fd"], "eps_grid": [1.0, 0.5, 0.25]}}"#);
    let o = srheat(&["verify", "--corpus", "euclidean1", "--check", "limit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rep = read_json(&out.join("limit.json"));
    let c = rep["result"]["constants"][0]["value"].as_f64().unwrap();
    let exact = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    assert!((c - exact).abs() < 1e-3 * exact, "{c}");
    assert!(out.join("limit.csv").exists() && out.join("limit.gp").exists());
}

#[test]
fn reruns_are_byte_identical_apart_from_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"mc": {"n_paths": 2000, "batches": 20, "steps": 50}, "limit": {"eps_grid": [1.0, 0.5, 0.25]}, "fd": {"spacing": [0.1], "dt": 0.01}}"#,
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = srheat(&[
            "verify", "--corpus", "euclidean1", "--check", "limit", "--config", &cfg, "--seed", "9", "--tolerance-scale", "2", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(code(&o) <= 1);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["model_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["started_unix"].as_f64().unwrap() > 0.0);
    for f in manifest["files"].as_array().unwrap() {
        let f = f.as_str().unwrap();
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(x == y, "{f} differs");
        assert!(!String::from_utf8(x).unwrap().contains("unix"), "{f} carries a timestamp");
    }
    // defaults are echoed, overrides applied
    let cfg = read_json(&a.join("config.json"));
    assert_eq!(cfg["tolerance_scale"], 2.0);
    assert_eq!(cfg["seed"], 9);
    assert!(cfg["weyl"]["t_grid"].is_array());
}

#[test]
fn simulate_prints_csv_without_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"simulate": {"times": [0.5, 1.0]}, "fd": {"spacing": [0.05], "dt": 0.005}}"#);
    let o = srheat(&["simulate", "--corpus", "euclidean1", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "t,target,value,error");
    assert_eq!(rows.len(), 3);
    let v: f64 = rows[2].split(',').nth(2).unwrap().parse().unwrap();
    assert!((v - 1.0 / (4.0 * std::f64::consts::PI).sqrt()).abs() < 0.01 * v);
}

#[test]
fn nilpotentize_reports_the_structure() {
    let o = srheat(&["nilpotentize", "--corpus", "grushin_pert"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["flag"]["Q"], 3);
    assert_eq!(v["identity_chart"], true);
    assert_eq!(v["nilpotent"]["hat_fields"].as_array().unwrap().len(), 2);
}
