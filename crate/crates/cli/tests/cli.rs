use std::path::Path;
use std::process::{Command, Output};

fn ucplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucplab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["-o", dir.to_str().unwrap()]);
    ucplab(&all)
}

fn files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push(e.strip_prefix(dir).unwrap().display().to_string());
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn lists_presets() {
    let out = ucplab(&["presets"]);
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    for n in [
        "harmonic-catalog",
        "robin-manufactured",
        "nodal-cross",
        "blowup-homogeneous",
    ] {
        assert!(names.lines().any(|l| l == n), "{n} missing from\n{names}");
    }
}

#[test]
fn passing_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["blowup", "--preset", "blowup-homogeneous"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snaps: Vec<String> = files(dir.path())
        .into_iter()
        .filter(|f| f.starts_with("snapshots"))
        .collect();
    assert_eq!(
        snaps,
        [
            "lambda_0.025000.csv",
            "lambda_0.050000.csv",
            "lambda_0.100000.csv",
            "lambda_0.200000.csv",
            "lambda_0.400000.csv"
        ]
        .map(|s| format!("snapshots/{s}"))
    );
}

#[test]
fn frequency_writes_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["frequency", "--preset", "reflection", "--plots"]);
    assert!(out.status.success());
    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("r,H,N,F,log2_sqrt_N"));
    assert_eq!(profile.lines().count(), 41);
    assert!(dir.path().join("frequency.svg").exists());
}

#[test]
fn empty_analysis_writes_summary_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("field.toml");
    std::fs::write(
        &cfg,
        "[domain]\nradius = 1.0\n[field]\nkind = \"analytic\"\nexpr = \"x\"\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run_in(&out_dir, &["solve", "-c", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(files(&out_dir), ["summary.json"]);
}

#[test]
fn failed_gate_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wrong-order.toml");
    std::fs::write(
        &cfg,
        "[domain]\nradius = 1.0\n[field]\nkind = \"analytic\"\nexpr = \"x^2 - y^2\"\n[gates]\nexpected_order = 3\n",
    )
    .unwrap();
    let out = run_in(&dir.path().join("out"), &["frequency", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gate failed: frequency.order"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[domain]\nradius = 1.0\n[mesh]\nh = -0.1\n").unwrap();
    let out = run_in(&dir.path().join("out"), &["solve", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mesh") && err.contains('h'), "{err}");
    assert!(!dir.path().join("out").exists());

    let out = ucplab(&["verify", "--preset", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_ucplab"))
        .args(["presets"])
        .env("UCPLAB_THREADS", "0")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_ucplab"))
        .args(["solve", "--preset", "flat-field", "-o", "/nonexistent-dir-for-ucplab"])
        .env("UCPLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
