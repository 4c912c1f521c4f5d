use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qpost(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpost")).args(args).current_dir(dir).output().unwrap()
}

fn quick_median(out: &Path, cwd: &Path) -> Output {
    let out = out.to_str().unwrap();
    let args = ["median", "--set", "n_reps=5", "--set", "n_iters=2000", "--set", "burn_in=500", "--per-rep", "--out-dir", out];
    qpost(&args, cwd)
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = quick_median(&a, tmp.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(quick_median(&b, tmp.path()).status.success());
    for f in ["median_summary.csv", "median_replications.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let summary = fs::read_to_string(a.join("median_summary.csv")).unwrap();
    assert!(summary.starts_with("param,bias,avg_post_var,mse,avg_post_sd,coverage,n_reps"));
    assert!(summary.contains("q.theta") && summary.contains("gibbs_w1.theta"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("median_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n_reps"], 5);
    let mut entries: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    entries.sort();
    assert_eq!(entries, ["a", "b"], "nothing is written outside the output directories");
}

#[test]
fn config_file_then_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.conf"), "# quick\nn_reps = 4\nn_iters = 1500\nburn_in = 500\nepsilon = 0.1\n").unwrap();
    let out = qpost(&["ksd", "--config", "run.conf", "--set", "n_reps=3", "--methods", "q", "--out-dir", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(tmp.path().join("o/ksd_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.trim_end().ends_with(",3"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(qpost(&["nonsense"], tmp.path()).status.code(), Some(2));
    let bad = qpost(&["linreg", "--set", "gamma=-1"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("gamma >= 0"));
    let unknown = qpost(&["linreg", "--set", "kappa=3"], tmp.path());
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("valid keys"));
    fs::write(tmp.path().join("bad.conf"), "n = 10\nthis line is wrong\n").unwrap();
    let line = qpost(&["median", "--config", "bad.conf"], tmp.path());
    assert_eq!(line.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&line.stderr).contains("line 2"));
    assert!(!tmp.path().join("qpost-out").exists());
}

#[test]
fn sample_and_pseudo_true_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let s = qpost(&["sample", "cmp", "--set", "n=300", "--set", "n_iters=1500", "--set", "burn_in=500", "--out-dir", "o"], tmp.path());
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let chain = fs::read_to_string(tmp.path().join("o/cmp_q_chain.csv")).unwrap();
    assert_eq!(chain.lines().next(), Some("theta1,theta2"));
    assert_eq!(chain.lines().count(), 1001);
    let p = qpost(&["pseudo-true", "tukey", "--big-n", "100000", "--out-dir", "o"], tmp.path());
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("o/tukey_pseudo_true.json")).unwrap()).unwrap();
    assert_eq!(v["big_n"], 100000);
}
