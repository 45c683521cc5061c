use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dpsens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpsens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

const UNCONTROLLED: &str = r#"{
  "dims": {"N": 2, "nx": 1, "nu": 1, "nd": 1},
  "stages": [
    {"Q": [[1.0]], "R": [[1.0]], "S": [[0.0]], "A": [[1.0]], "B": [[0.0]], "C": [[0.0]], "D1": [[0.0]], "D2": [[0.0]]},
    {"Q": [[1.0]], "R": [[1.0]], "S": [[0.0]], "A": [[1.0]], "B": [[0.0]], "C": [[0.0]], "D1": [[0.0]], "D2": [[0.0]]}
  ],
  "terminal_Q": [[1.0]]
}"#;

const ZERO_COST: &str = r#"{
  "dims": {"N": 3, "nx": 1, "nu": 1, "nd": 1},
  "stages": [
    {"Q": [[1.0]], "R": [[1.0]], "S": [[0.0]], "A": [[1.0]], "B": [[1.0]], "C": [[0.0]], "D1": [[0.0]], "D2": [[0.0]]},
    {"Q": [[1.0]], "R": [[1.0]], "S": [[0.0]], "A": [[1.0]], "B": [[1.0]], "C": [[0.0]], "D1": [[0.0]], "D2": [[0.0]]},
    {"Q": [[1.0]], "R": [[1.0]], "S": [[0.0]], "A": [[1.0]], "B": [[1.0]], "C": [[0.0]], "D1": [[0.0]], "D2": [[0.0]]}
  ],
  "terminal_Q": [[1.0]]
}"#;

#[test]
fn check_passes_on_the_tracking_model() {
    let out = dpsens(&["check", "tracking-linear", "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = stdout_json(&out);
    assert_eq!(rep["pass"], true);
    assert_eq!(rep["t"], 1);
    assert!((rep["gamma"].as_f64().unwrap() - 9.0).abs() < 1e-9);
    assert_eq!(rep["t_k"].as_array().unwrap().len(), 40);
}

#[test]
fn check_fails_without_control_authority() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("uncontrolled.json");
    std::fs::write(&path, UNCONTROLLED).unwrap();
    let out = dpsens(&["check", path.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 1);
    let rep = stdout_json(&out);
    assert_eq!(rep["assumptions"]["controllability"], false);
    assert_eq!(rep["pass"], false);
}

#[test]
fn malformed_and_missing_inputs_are_io_failures() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"dims\": ").unwrap();
    let out = dpsens(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
    let missing = dir.path().join("absent.json");
    assert_eq!(code(&dpsens(&["check", missing.to_str().unwrap()])), 3);
}

#[test]
fn wrong_shapes_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shape.json");
    std::fs::write(&path, UNCONTROLLED.replacen("\"B\": [[0.0]]", "\"B\": [[0.0, 1.0]]", 1)).unwrap();
    let out = dpsens(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stages[0].B"));
}

#[test]
fn invalid_problem_data_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("asym.json");
    let text = UNCONTROLLED
        .replace("\"nx\": 1", "\"nx\": 2")
        .replace("\"Q\": [[1.0]]", "\"Q\": [[1.0, 0.5], [0.0, 1.0]]")
        .replace("\"S\": [[0.0]]", "\"S\": [[0.0, 0.0]]")
        .replace("\"A\": [[1.0]]", "\"A\": [[1.0, 0.0], [0.0, 1.0]]")
        .replace("\"B\": [[0.0]]", "\"B\": [[0.0], [0.0]]")
        .replace("\"C\": [[0.0]]", "\"C\": [[0.0], [0.0]]")
        .replace("\"D1\": [[0.0]]", "\"D1\": [[0.0, 0.0]]")
        .replace("\"terminal_Q\": [[1.0]]", "\"terminal_Q\": [[1.0, 0.0], [0.0, 1.0]]");
    std::fs::write(&path, text).unwrap();
    let out = dpsens(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not symmetric"));
}

#[test]
fn convexify_auto_records_the_shift() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("conv.json");
    let out = dpsens(&["convexify", "tracking-exp", "--delta", "auto", "-o", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let conv: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!((conv["delta"].as_f64().unwrap() - 8.1).abs() < 1e-9);
    assert_eq!(conv["Qbar"].as_array().unwrap().len(), 41);
    for st in conv["stages"].as_array().unwrap() {
        let (q, r, s) = (st["Q"][0][0].as_f64().unwrap(), st["R"][0][0].as_f64().unwrap(), st["S"][0][0].as_f64().unwrap());
        assert!(q > 0.0 && r > 0.0 && q * r - s * s > 0.0, "{st}");
    }
}

#[test]
fn convexify_zero_shift_warns() {
    let out = dpsens(&["convexify", "tridiagonal", "--horizon", "8", "--delta", "0"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("semidefinite"));
    let conv: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(conv["delta"], 0.0);
}

#[test]
fn oversized_shift_reports_the_stage() {
    let out = dpsens(&["convexify", "tracking-linear", "--horizon", "10", "--delta", "50"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not below gamma"));
    assert!(err.contains("at stage"), "{err}");
}

#[test]
fn sensitivity_rows_respect_the_decay_bound() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("decay.csv");
    let out = dpsens(&["sensitivity", "tracking-linear", "-o", csv.to_str().unwrap(), "--lambda-c", "1", "--t-max", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&csv), "k,norm_p,norm_q,log_ratio,theory_bound");
    let data = rows(&csv);
    assert_eq!(data.len(), 41);
    for (k, r) in data.iter().enumerate() {
        assert_eq!(r[0], k as f64);
        assert!(r[1].max(r[2]) <= r[4], "row {k}: {r:?}");
    }
    let summary = stdout_json(&out);
    assert_eq!(summary["bound_holds"], true);
    assert_eq!(summary["stage"], 20);
    for key in ["rho_fit", "rho_theory", "Upsilon_pq"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    assert!(summary["rho_theory"].as_f64().unwrap() < 1.0);
}

#[test]
fn initial_state_perturbation_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("decay.csv");
    let summary = dir.path().join("summary.json");
    let out = dpsens(&[
        "sensitivity",
        "tridiagonal",
        "--horizon",
        "12",
        "--stage",
        "-1",
        "-o",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let data = rows(&csv);
    assert_eq!(data.len(), 13);
    assert_eq!(data[0][1], 1.0);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["stage"], -1);
}

#[test]
fn zero_cost_model_has_zero_sensitivities() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    std::fs::write(&path, ZERO_COST).unwrap();
    let csv = dir.path().join("decay.csv");
    let out = dpsens(&["sensitivity", path.to_str().unwrap(), "--stage", "1", "-o", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for r in rows(&csv) {
        assert_eq!(r[1], 0.0);
        assert_eq!(r[2], 0.0);
        assert_eq!(r[3], -500.0);
    }
}

#[test]
fn out_of_range_stage_is_rejected() {
    let out = dpsens(&["sensitivity", "tracking-linear", "--stage", "40"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn experiment_writes_one_file_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsens(&["experiment", "--eps", "0.1,0.01", "--parallel", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 4);
    for kind in ["linear", "exp"] {
        let reference = rows(&dir.path().join(format!("{kind}_derivative.csv")));
        assert_eq!(reference.len(), 41);
        let mut gaps = Vec::new();
        for eps in ["0.1", "0.01"] {
            let path = dir.path().join(format!("{kind}_eps{eps}.csv"));
            assert_eq!(header(&path), "k,log_ratio");
            let data = rows(&path);
            assert_eq!(data.len(), 41);
            assert!(data.iter().all(|r| r[1] >= -500.0));
            let run = summary["runs"]
                .as_array()
                .unwrap()
                .iter()
                .find(|r| r["dynamics"] == kind && r["file"] == format!("{kind}_eps{eps}.csv"))
                .unwrap();
            gaps.push(run["derivative_gap"].as_f64().unwrap());
        }
        if kind == "linear" {
            assert!(gaps.iter().all(|g| *g < 1e-6), "{gaps:?}");
        } else {
            assert!(gaps[1] < gaps[0], "{gaps:?}");
        }
    }
}

#[test]
fn parallel_and_sequential_experiments_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = ["experiment", "--dynamics", "exp", "--horizon", "12", "--eps", "1,0.1"];
    let mut pa = base.to_vec();
    pa.extend(["-o", a.path().to_str().unwrap()]);
    let mut pb = base.to_vec();
    pb.extend(["--parallel", "-o", b.path().to_str().unwrap()]);
    assert_eq!(code(&dpsens(&pa)), 0);
    assert_eq!(code(&dpsens(&pb)), 0);
    for f in ["exp_eps1.csv", "exp_eps0.1.csv", "exp_derivative.csv"] {
        assert_eq!(
            std::fs::read_to_string(a.path().join(f)).unwrap(),
            std::fs::read_to_string(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn experiment_rejects_bad_weights_and_steps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&dpsens(&["experiment", "--mu2", "0", "-o", d])), 1);
    assert_eq!(code(&dpsens(&["experiment", "--mu1", "1", "--mu2", "2", "-o", d])), 1);
    assert_eq!(code(&dpsens(&["experiment", "--eps", "0.1,-1", "-o", d])), 1);
}

#[test]
fn verify_passes_on_builtin_models() {
    for model in ["tracking-linear", "tracking-exp", "tridiagonal", "random"] {
        let out = dpsens(&["verify", model, "--horizon", "20", "--seed", "3", "--json"]);
        assert_eq!(code(&out), 0, "{model}: {}", String::from_utf8_lossy(&out.stdout));
        let rep = stdout_json(&out);
        assert_eq!(rep["pass"], true);
        if model.starts_with("tracking") {
            assert_eq!(rep["checks"]["hessian_blocks"]["pass"], true);
            assert!(rep["info"]["fd_error"].as_f64().unwrap() < 1e-2);
        }
    }
}
