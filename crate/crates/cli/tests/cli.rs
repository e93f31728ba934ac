use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("nldp-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn nldp(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_nldp")).args(args).output().expect("binary runs");
    out.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn validate_writes_a_stamped_report() {
    let out = scratch("validate");
    let cfg = config("desk.json");
    assert_eq!(nldp(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let v = read_json(&out.join("validate.json"));
    assert_eq!(v["report"]["regime"], "Superquadratic");
    assert_eq!(v["meta"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["meta"]["toolkit_version"], env!("CARGO_PKG_VERSION"));
    assert!(!out.join("error.json").exists());
}

#[test]
fn eval_outside_the_margin_is_a_config_error() {
    let out = scratch("margin");
    let cfg = config("desk.json");
    let code = nldp(&["eval", "--config", cfg.to_str().unwrap(), "--set", "eval.points=[[1.99]]", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    let e = read_json(&out.join("error.json"));
    assert_eq!(e["error"]["kind"], "outside_margin");
    assert!(e["error"]["message"].as_str().unwrap().contains("margin"));
}

#[test]
fn bad_configs_exit_with_one() {
    let out = scratch("bad");
    let cfg = config("desk.json");
    let c = cfg.to_str().unwrap();
    let o = out.to_str().unwrap();
    assert_eq!(nldp(&["validate", "--config", c, "--set", "schema=other/1", "--out", o]), 1);
    assert_eq!(nldp(&["validate", "--config", c, "--set", "problem.exponents.q=9.0", "--out", o]), 1);
    assert_eq!(nldp(&["validate", "--config", c, "--set", "problem.typo=1", "--out", o]), 1);
    assert_eq!(nldp(&["holder", "--config", c, "--set", "reglab.input=missing.json", "--out", o]), 1);
    assert_eq!(nldp(&["validate", "--out", o]), 1);
    assert_eq!(nldp(&["frobnicate", "--out", o]), 1);
    assert_eq!(read_json(&out.join("error.json"))["error"]["exit_code"], 1);
}

#[test]
fn degenerate_fit_is_a_numerical_failure() {
    let out = scratch("degenerate");
    let cfg = config("desk.json");
    // zero source and zero exterior give u = 0
    assert_eq!(nldp(&["holder", "--config", cfg.to_str().unwrap(), "--set", "solve.nodes=256", "--out", out.to_str().unwrap()]), 2);
    assert_eq!(read_json(&out.join("error.json"))["error"]["kind"], "degenerate_fit");
}

#[test]
fn reruns_are_bit_identical() {
    let (a, b) = (scratch("rep-a"), scratch("rep-b"));
    let cfg = config("desk.json");
    for d in [&a, &b] {
        let code = nldp(&[
            "check-inequalities",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "42",
            "--set",
            "inequalities.draws=20000",
            "--set",
            "inequalities.c2_draws=2000",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let (x, y) = (std::fs::read(a.join("inequalities.json")).unwrap(), std::fs::read(b.join("inequalities.json")).unwrap());
    assert_eq!(x, y);
    assert_eq!(read_json(&a.join("inequalities.json"))["meta"]["seed"], 42);
}

#[test]
fn solve_writes_solution_and_residuals() {
    let out = scratch("solve");
    let cfg = config("pipeline.json");
    assert_eq!(nldp(&["solve", "--config", cfg.to_str().unwrap(), "--set", "solve.nodes=128", "--out", out.to_str().unwrap()]), 0);
    let csv = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 129);
    assert_eq!(read_json(&out.join("solve.json"))["report"]["converged"], true);
    assert!(out.join("residuals.csv").exists() && out.join("solution.json").exists());
}

#[test]
fn pipeline_produces_a_full_trace() {
    let out = scratch("pipeline");
    let cfg = config("pipeline.json");
    assert_eq!(nldp(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    for f in ["pipeline.json", "trace.csv", "solution.csv", "solution.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(rows.len() >= 6, "{trace}");
    assert!(rows.iter().all(|r| r.ends_with("true,true")));
}
