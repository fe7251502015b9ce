use std::path::Path;
use std::process::{Command, Output};

use dac_cli::commands::fresh_network;
use dac_cli::config::{Overrides, Profile, RunConfig};
use dac_core::dataset::Dataset;
use dac_core::qnet::Checkpoint;

const TINY: &[&str] = &[
    "--seed", "1", "--t", "5", "--batch-size", "4", "--runs", "2", "--calibration-episodes", "4",
    "--d-model", "8", "--d-state", "4", "--train-ids", "1,4", "--test-ids", "2", "--dim", "5",
];

fn dac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dac")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dac(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cat<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

fn collect_tiny(dir: &Path, size: &str) {
    ok(&cat(&["collect", "--out", s(dir), "--d", size], TINY));
}

fn rows(p: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(p).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn collect_splits_by_mu_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let flags = ["--alg", "0", "--mu", "0.5", "--d", "10", "--t", "50", "--seed", "1", "--train-ids", "1,4", "--test-ids", "2", "--dim", "5", "--calibration-episodes", "4"];
    ok(&cat(&["collect", "--out", s(&a)], &flags));
    ok(&cat(&["collect", "--out", s(&b)], &flags));
    let (da, db) = (Dataset::load(&a).unwrap(), Dataset::load(&b).unwrap());
    assert_eq!((da.manifest.size, da.manifest.exploitation_count), (10, 5));
    assert_eq!(da.manifest.checksum, db.manifest.checksum);
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(dac(&["collect"]).status.code(), Some(2));
    assert_eq!(dac(&["collect", "--out", "/nonexistent/x", "--mu", "2"]).status.code(), Some(2));
    assert_eq!(dac(&["train", "--out", "x", "--data", "y", "--bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dac(&["eval", "--checkpoint", s(&dir.path().join("missing.bin")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_writes_one_row_per_epoch_and_resume_continues_numbering() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    collect_tiny(&data, "8");
    let first = dir.path().join("m1");
    ok(&cat(&["train", "--data", s(&data), "--out", s(&first), "--epochs", "5"], TINY));
    let epochs: Vec<String> = rows(&first.join("loss.csv")).iter().map(|r| r[0].to_string()).collect();
    assert_eq!(epochs, ["1", "2", "3", "4", "5"]);

    let second = dir.path().join("m2");
    let ck = first.join("checkpoint.bin");
    ok(&cat(&["train", "--data", s(&data), "--out", s(&second), "--resume", s(&ck), "--epochs", "2"], TINY));
    let epochs: Vec<String> = rows(&second.join("loss.csv")).iter().map(|r| r[0].to_string()).collect();
    assert_eq!(epochs, ["6", "7"]);
    assert_eq!(Checkpoint::load(&second.join("checkpoint.bin")).unwrap().epoch, 7);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    collect_tiny(&data, "8");
    let out = dir.path().join("m");
    ok(&cat(&["train", "--data", s(&data), "--out", s(&out), "--epochs", "3", "--lr", "0"], TINY));
    let trained = Checkpoint::load(&out.join("checkpoint.bin")).unwrap().network;
    let flags = Overrides { d_model: Some(8), d_state: Some(4), ..Overrides::default() };
    let cfg = RunConfig::resolve(Profile::Desk, 1, None, &flags).unwrap();
    let fresh = fresh_network(&cfg, trained.config.k, trained.config.m).unwrap();
    assert_eq!(trained.to_flat(), fresh.to_flat());
}

#[test]
fn eval_reports_19_runs_per_problem_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    collect_tiny(&data, "8");
    let model = dir.path().join("m");
    ok(&cat(&["train", "--data", s(&data), "--out", s(&model), "--epochs", "1"], TINY));
    // same flags without --runs
    let at = TINY.iter().position(|a| *a == "--runs").unwrap();
    let no_runs: Vec<&str> = TINY[..at].iter().chain(&TINY[at + 2..]).copied().collect();
    let eval = dir.path().join("e");
    ok(&cat(&["eval", "--checkpoint", s(&model.join("checkpoint.bin")), "--out", s(&eval)], &no_runs));
    let r = rows(&eval.join("eval.csv"));
    for policy in ["trained", "random"] {
        assert_eq!(r.iter().filter(|x| &x[3] == policy).count(), 19, "{policy}");
    }
    assert!(r.iter().all(|x| (0.0..=1.0 + 1e-9).contains(&x[2].parse::<f64>().unwrap())));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "d = 6\nmu = 0.5\nt = 4\ntrain_ids = [1, 4]\ntest_ids = [2]\ncalibration_episodes = 4\n").unwrap();
    let out = dir.path().join("d");
    ok(&["collect", "--out", s(&out), "--config", s(&cfg), "--mu", "1"]);
    let d = Dataset::load(&out).unwrap();
    assert_eq!((d.manifest.size, d.manifest.horizon, d.manifest.exploitation_count), (6, 4, 6));
}

#[test]
fn verify_passes_and_catches_injected_sign_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["verify", "--out", s(dir.path()), "--mdps", "20"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{out}");
    let bad = dac(&["verify", "--out", s(dir.path()), "--mdps", "5", "--inject-sign-error"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).lines().any(|l| l.starts_with("FAIL grad_check")));
    let tight = dac(&["verify", "--out", s(dir.path()), "--mdps", "20", "--decomposition-tol", "1e-14"]);
    assert_eq!(tight.status.code(), Some(1));
}
