use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MODEL: &str = r#"{"values":[1,20],"probs":[0.7,0.3],"z":{"geometric":0.2}}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agedist"))
}

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, MODEL).unwrap();
    (dir, model)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn tradeoff_writes_points_and_converse() {
    let (dir, model) = setup();
    let out = dir.path().join("curve.csv");
    let o = run(&["tradeoff", "--model", s(&model), "--eta-list", "4,1,0.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("exact_until"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("eta,lambda,delta_e,d,K,b1_size,iters\n"));
    assert_eq!(csv.lines().count(), 4);
    let conv = std::fs::read_to_string(dir.path().join("curve_converse.csv")).unwrap();
    assert!(conv.starts_with("eta,intercept\n"));
}

#[test]
fn tradeoff_skips_unsolvable_weights() {
    let (dir, model) = setup();
    let out = dir.path().join("c.csv");
    let o = run(&["tradeoff", "--model", s(&model), "--eta-list", "1,0.01", "--out", s(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped eta = 0.01"));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn tradeoff_without_weights_is_an_error() {
    let (dir, model) = setup();
    let o = run(&["tradeoff", "--model", s(&model), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strategies_csv_has_dmin_row() {
    let (_dir, model) = setup();
    let o = run(&["strategies", "--model", s(&model), "--k-range", "1..4", "--strategy", "S1,S2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("strategy,K,delta_e,d\n"));
    assert!(text.lines().any(|l| l.starts_with("dmin,")));
    assert_eq!(text.lines().filter(|l| l.starts_with("S1,")).count(), 4);
}

#[test]
fn solved_policy_round_trips_through_a_file() {
    let (dir, model) = setup();
    let pf = dir.path().join("policy.json");
    let common = ["--model", s(&model), "--horizon", "50000", "--seed", "3"];
    let a = bin().arg("simulate").args(common).args(["--policy", "solved", "--eta", "1", "--save-policy", s(&pf)]).output().unwrap();
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = bin().arg("simulate").args(common).args(["--policy", "file", "--policy-file", s(&pf)]).output().unwrap();
    assert!(b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    for key in ["delta_e", "se_delta", "d", "se_d", "horizon", "seed"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn erasure_mode_matches_direct() {
    let (_dir, model) = setup();
    let base = ["simulate", "--model", s(&model), "--policy", "strategy", "--strategy", "S2", "--k", "3", "--horizon", "50000"];
    let d = bin().args(base).output().unwrap();
    let e = bin().args(base).args(["--mode", "erasure"]).output().unwrap();
    assert!(d.status.success() && e.status.success());
    assert_eq!(stdout(&d), stdout(&e));
}

#[test]
fn bit_policies_need_bits_mode() {
    let (_dir, model) = setup();
    let o = run(&["simulate", "--model", s(&model), "--policy", "threshold", "--tau", "2", "--mode", "direct", "--horizon", "50000"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--model", s(&model), "--policy", "threshold", "--horizon", "50000"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--tau"));
}

#[test]
fn bufferignorant_curves_and_dictionary() {
    let (dir, model) = setup();
    let out = dir.path().join("bi.csv");
    let dict = dir.path().join("dict");
    let o = run(&[
        "bufferignorant", "--model", s(&model), "--n-bits", "3", "--tau-range", "0..2",
        "--horizon", "50000", "--out", s(&out), "--dump-dictionary", s(&dict),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("variant,N,tau,delta_e,d\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("bi,")).count(), 3);
    assert_eq!(csv.lines().filter(|l| l.starts_with("bit,")).count(), 3);
    let words = std::fs::read_to_string(dict.with_extension("N3")).unwrap();
    assert_eq!(words.lines().count(), 8);
}

#[test]
fn verify_runs_selected_checks() {
    let (_dir, model) = setup();
    let o = run(&["verify", "--check", "1,2", "--model", s(&model), "--horizon", "100000"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("3 checks, 0 failed"));
}

#[test]
fn verify_with_missing_model_runs_nothing() {
    let o = run(&["verify", "--model", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).is_empty());
}

#[test]
fn verify_reports_failures_in_exit_code() {
    let o = run(&["verify", "--check", "8", "--lambda-shift", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn unknown_check_is_rejected() {
    assert_eq!(run(&["verify", "--check", "99"]).status.code(), Some(2));
}
