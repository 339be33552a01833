use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn taskexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskexp")).args(args).output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn bench_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = taskexp(&[
        "bench", "--scenario", "bump1d", "--methods", "task,random", "--episodes", "20", "--trials", "2",
        "--checkpoints", "10,20", "--out", out, "--set", "scenario.eval_rollouts=200",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    let resolved: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("resolved-config.json")).unwrap()).unwrap();
    assert_eq!(resolved["scenario"]["eval_rollouts"], 200);
    assert_eq!(resolved["episodes"], 20);
    assert!(dir.path().join("summary.json").is_file());
}

#[test]
fn configuration_errors_exit_with_code_two_and_json_on_stderr() {
    let out = taskexp(&["bench", "--scenario", "pendulum", "--episodes", "20"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert!(err["message"].as_str().unwrap().contains("pendulum"));
    assert!(err["error"].is_string());

    let out = taskexp(&["hessian", "--scenario", "drone", "--method", "newton"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hessian_reports_the_bump_spectrum() {
    let report = json_stdout(&taskexp(&["hessian", "--scenario", "bump1d", "--method", "gauss-newton", "--json"]));
    assert_eq!(report["method"], "gauss-newton");
    let eig: Vec<f64> = report["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(eig.len(), 12);
    assert!(eig.windows(2).all(|w| w[0] >= w[1]));
    assert!(eig[0] > 0.0 && eig[11] >= 0.0);
    let diag = report["diagonal"].as_array().unwrap();
    assert!(diag[2].as_f64().unwrap() >= 10.0 * diag[3].as_f64().unwrap());
}

#[test]
fn oed_demo_prints_one_objective_per_iteration() {
    let report = json_stdout(&taskexp(&[
        "oed-demo", "--scenario", "bump1d", "--iterations", "3", "--per-iteration", "4", "--json",
    ]));
    assert_eq!(report["objective"].as_array().unwrap().len(), 4);
    assert_eq!(report["episodes"], 16);
}

#[test]
fn estimate_recovers_the_truth_from_noiseless_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = taskexp(&[
        "bench", "--scenario", "drone", "--methods", "random", "--episodes", "12", "--trials", "1", "--out", out,
        "--save-trajectories", "--set", "scenario.noise_var=0", "--set", "scenario.eval_rollouts=10",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let file = dir.path().join("trajectories").join("trial-0000-random.ndjson");
    assert!(Path::new(&file).is_file());
    let report = json_stdout(&taskexp(&[
        "estimate", "--scenario", "drone", "--set", "exploration.estimator.relative_ridge=0", "--trajectories",
        file.to_str().unwrap(), "--json",
    ]));
    assert_eq!(report["episodes"], 12);
    assert!(report["frob_error"].as_f64().unwrap() < 1e-8, "{report}");
}
