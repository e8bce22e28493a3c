use std::path::Path;
use std::process::{Command, Output};

fn sysid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sysid")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn seed_is_required() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["simulate", "estimate", "realize", "verify-theory", "experiment", "emit-plots"] {
        let out = sysid(&[cmd], dir.path());
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"), "{cmd}");
    }
}

#[test]
fn simulate_estimate_realize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = sysid(&["simulate", "--seed", "4", "--n", "6", "--m", "2", "--p", "2", "--samples", "300", "--horizons", "6", "--noise", "0.01:0.01", "--out", "run"], d);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    assert_eq!(stdout_json(&sim)["length"], 305);

    let est = sysid(&["estimate", "--seed", "4", "--trajectory", "run/trajectory.json", "--system", "run/system.json", "--horizon", "6", "--out", "g.json"], d);
    assert!(est.status.success(), "{}", String::from_utf8_lossy(&est.stderr));
    let summary = stdout_json(&est);
    assert_eq!(summary["converged"], true);
    assert!(summary["markov_fro"].as_f64().unwrap() < 1.0);

    let ls = sysid(&["estimate", "--seed", "4", "--trajectory", "run/trajectory.json", "--horizon", "6", "--samples", "8", "--estimator", "ls", "--out", "ls.json"], d);
    assert!(ls.status.success());
    assert_eq!(stdout_json(&ls)["underdetermined"], true);

    let real = sysid(&["realize", "--seed", "4", "--markov", "run/system.json", "--order", "8", "--out", "r.json"], d);
    assert!(real.status.success(), "{}", String::from_utf8_lossy(&real.stderr));
    let order = stdout_json(&real)["order"].as_u64().unwrap();
    assert!((1..=6).contains(&order));

    let padded = sysid(&["realize", "--seed", "4", "--markov", "g.json", "--order", "6", "--rank", "3", "--out", "rg.json"], d);
    assert!(padded.status.success(), "{}", String::from_utf8_lossy(&padded.stderr));
    assert_eq!(stdout_json(&padded)["order"], 3);
}

#[test]
fn experiment_exit_code_tracks_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("grid.txt"), "n = 6\nm = 2\np = 2\nhorizons = 3,5\nsamples = 20,40\nseeds = 0..2\nbandwidth = 1\n").unwrap();
    let ok = sysid(&["experiment", "--seed", "1", "--config", "grid.txt", "--outputs", "ok"], d);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(stdout_json(&ok)["records"], 16);
    assert!(d.join("ok/markov_fro.csv").exists());

    let bad = sysid(&["experiment", "--seed", "1", "--config", "grid.txt", "--outputs", "bad", "--lasso-max-iters", "1"], d);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout_json(&bad)["failures"].as_u64().unwrap() > 0);

    let again = sysid(&["experiment", "--seed", "1", "--config", "grid.txt", "--outputs", "again"], d);
    assert!(again.status.success());
    assert_eq!(std::fs::read(d.join("ok/markov_fro.csv")).unwrap(), std::fs::read(d.join("again/markov_fro.csv")).unwrap());

    let plots = sysid(&["emit-plots", "--seed", "1", "--report", "ok/report.json", "--metric", "lambda", "--group-by", "estimator,T", "--out", "plots"], d);
    assert!(plots.status.success(), "{}", String::from_utf8_lossy(&plots.stderr));
    let median = std::fs::read_to_string(d.join("plots/lambda_median.csv")).unwrap();
    assert_eq!(median.lines().count(), 5);

    let unknown = sysid(&["emit-plots", "--seed", "1", "--report", "ok/report.json", "--metric", "speed", "--out", "plots"], d);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn verify_theory_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = sysid(&["verify-theory", "--seed", "2", "--n", "10", "--m", "3", "--p", "3", "--horizons", "6", "--samples", "100", "--trials", "20", "--out", "theory.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["p_norms_hold"], true);
    assert_eq!(summary["row_l1_pass"], true);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("theory.json")).unwrap()).unwrap();
    assert!(report["bounds"]["theorem2"]["e1"].as_f64().unwrap() > 0.0);
}
