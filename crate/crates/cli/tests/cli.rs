use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_globalsdp")).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_globalsdp"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_fractional() {
    let o = run(&["solve", "--problem", "fractional", "--tol", "1e-8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["status"], "optimal");
    assert!(v["y_star"].as_f64().unwrap().abs() <= 1e-6);
    assert_eq!(v["certificate"]["accepted"], true);
    assert!(v.get("trace").is_none());
    assert!(v.get("wall_time").is_none());
}

#[test]
fn trace_flag_adds_the_trace() {
    let o = run(&["solve", "--problem", "sqrt", "--trace"]);
    assert_eq!(code(&o), 0);
    assert!(!json(&o)["trace"].as_array().unwrap().is_empty());
}

#[test]
fn multistart_truss_two_bar() {
    let o = run(&["multistart", "--problem", "truss-2bar", "--starts", "16", "--seed", "42"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert!(v["y_spread"].as_f64().unwrap() <= 1e-5);
    assert_eq!(v["accepted"], 16);
}

#[test]
fn verify_interior_point_is_rejected() {
    let o = run(&["verify-kkt", "--problem", "fractional", "--x", "1", "--y", "0.9"]);
    assert_eq!(code(&o), 1);
    let v = json(&o);
    assert_eq!(v["accepted"], false);
    assert_eq!(v["reason"], "empty active set");
}

#[test]
fn verify_analytic_optimum_is_accepted() {
    let o = run(&["verify-kkt", "--problem", "fractional", "--x", "0", "--y", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = json(&o);
    assert_eq!(v["Z"], serde_json::json!([[1.0]]));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for args in [
        &["solve", "--problem", "minimax", "--trace"][..],
        &["multistart", "--problem", "fractional", "--starts", "6", "--seed", "9"][..],
        &["check-assumptions", "--problem", "truss-2bar", "--samples", "50"][..],
    ] {
        let a = run(args);
        let b = run(args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let a = run_env(&["multistart", "--problem", "fractional", "--starts", "6"], "GLOBALSDP_THREADS", "1");
    let b = run(&["multistart", "--problem", "fractional", "--starts", "6"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn help_lists_verbs_and_flags() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for verb in ["catalog", "solve", "check-assumptions", "verify-kkt", "multistart", "oracle"] {
        assert!(text.contains(verb), "missing {verb}");
    }
    let o = run(&["solve", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--problem",
        "--input",
        "--tol",
        "--inner-mu",
        "--max-iter",
        "--seed",
        "--out",
        "--trace",
        "--override-assumptions",
        "--summary",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let text = String::from_utf8_lossy(&run(&["multistart", "--help"]).stdout).into_owned();
    assert!(text.contains("--starts"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["solve", "--problem", "fractional", "--bogus"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["solve"])), 2);
    assert_eq!(code(&run(&["solve", "--problem", "fractional", "--input", "x.json"])), 2);
    assert_eq!(code(&run(&["solve", "--problem", "nope"])), 2);
    assert_eq!(code(&run(&["solve", "--problem", "fractional", "--tol", "0"])), 2);
    assert_eq!(code(&run(&["multistart", "--problem", "fractional", "--starts", "1"])), 2);
    assert_eq!(code(&run_env(&["catalog"], "GLOBALSDP_THREADS", "zero")), 2);
}

#[test]
fn malformed_files_report_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"m\": 1,\n  \"A0\": [[0.0]],\n  oops\n}").unwrap();
    let o = run(&["solve", "--input", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let wrong = dir.path().join("wrong.json");
    fs::write(
        &wrong,
        r#"{"m": 1, "nA": 1, "nB": 1, "A0": [[0.0]], "Aj": [[[-1.0]]], "C0": [[1.0],[0.0,1.0]],
            "Cj": [[[1.0]]], "B0": [[0.0]], "Bj": [[[1.0]]], "x_box": [[0.0, 10.0]]}"#,
    )
    .unwrap();
    let o = run(&["solve", "--input", wrong.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("C0"), "{}", stderr(&o));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["solve", "--input", missing.to_str().unwrap()])), 2);
}

#[test]
fn input_files_of_each_format() {
    let dir = tempfile::tempdir().unwrap();
    let bilinear = dir.path().join("fractional.json");
    fs::write(
        &bilinear,
        r#"{"name": "fractional", "m": 1, "nA": 1, "nB": 1, "A0": [[0.0]], "Aj": [[[-1.0]]], "C0": [[1.0]],
            "Cj": [[[1.0]]], "B0": [[0.0]], "Bj": [[[1.0]]], "x_box": [[0.0, 10.0]], "y_hint": [-1.0, 2.0]}"#,
    )
    .unwrap();
    let o = run(&["solve", "--input", bilinear.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(json(&o)["y_star"].as_f64().unwrap().abs() <= 1e-6);

    let truss = dir.path().join("truss.json");
    fs::write(
        &truss,
        r#"{"nodes": [[0, 0], [2, 0], [1, 1]], "bars": [[0, 2], [1, 2]], "E": 1.0, "rho": 1.0,
            "node_mass": [0, 0, 0.5], "fixed_dofs": [0, 1, 2, 3], "x_min": 0.05, "V0": 1.4142135623730951}"#,
    )
    .unwrap();
    let o = run(&["solve", "--input", truss.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let y = json(&o)["y_star"].as_f64().unwrap();
    assert!((y + 1.0 - 0.5f64.sqrt()).abs() <= 1e-6, "{y}");

    let grasp = dir.path().join("grasp.json");
    fs::write(
        &grasp,
        r#"{"contacts": [{"p": [1, 0, 0], "b": [-1, 0, 0]}, {"p": [-1, 0, 0], "b": [1, 0, 0]}],
            "f_ext": [0, 0, -1], "T_ext": [0, 0, 0], "f_max": 10}"#,
    )
    .unwrap();
    let o = run(&["solve", "--input", grasp.to_str().unwrap(), "--override-assumptions"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn grasp_needs_the_override() {
    let o = run(&["check-assumptions", "--problem", "grasp-2finger"]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["monotonicity"], "fail");

    let o = run(&["solve", "--problem", "grasp-2finger"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("override"));

    let o = run(&["solve", "--problem", "grasp-2finger", "--override-assumptions"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["warnings"].as_array().unwrap().len(), 1);
    assert!((v["y_star"].as_f64().unwrap().sqrt() - 0.05).abs() <= 1e-4);
}

#[test]
fn out_flag_writes_file_and_summary_is_text() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = run(&["solve", "--problem", "sqrt", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["status"], "optimal");

    let o = run(&["solve", "--problem", "sqrt", "--summary"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("status") && text.contains("Optimal"));
}

#[test]
fn catalog_and_oracle() {
    let v = json(&run(&["catalog"]));
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"truss-10bar") && ids.contains(&"strict-concave"));

    let o = run(&["oracle", "--problem", "fractional"]);
    assert_eq!(code(&o), 0);
    assert!(json(&o)["y"].as_f64().unwrap().abs() <= 1e-9);

    let o = run(&["oracle", "--problem", "truss-10bar"]);
    assert_eq!(code(&o), 2);
    let o = run(&["oracle", "--problem", "fractional", "--resolution", "1e-9"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("exceeds"));
}
