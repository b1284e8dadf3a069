use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chance"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn list_problems_names_every_selector() {
    let out = chance(&["list-problems"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["toy2d", "norm:<d>", "linear:<path>", "quadratic:<path>"] {
        assert!(text.contains(name));
    }
}

#[test]
fn verify_quantiles_passes_and_unknown_suite_fails() {
    let out = chance(&["verify", "quantiles"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().trim_end().ends_with("PASS"));
    let out = chance(&["verify", "everything"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown suite"));
}

#[test]
fn verify_errorbound_reports_ratio() {
    let out = chance(&["verify", "errorbound"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("min ratio"));
}

#[test]
fn missing_config_is_an_error() {
    let out = chance(&["run", "--config", "/nonexistent/run.conf"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = chance(&["run", "--out", dir.path().to_str().unwrap(), "--set", "bund_sz=3"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stderr).unwrap().contains("bund_sz"));
}

#[test]
fn norm_run_is_feasible_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = chance(&["run", "--config", &repo_config("norm2.conf"), "--out", dir.path().to_str().unwrap()]);
    let summary = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(code(&out), 0, "{summary}");
    assert!(summary.starts_with("status=feasible problem=norm:2 n=1000"));
    assert!(summary.contains("subopt="));
    let iterates = fs::read_to_string(dir.path().join("iterates.csv")).unwrap();
    assert!(iterates.starts_with("iter,time_s,f,prob,h,eta,x1,x2\n"));
    assert!(iterates.lines().count() > 2);
    let levels = fs::read_to_string(dir.path().join("levelsets.csv")).unwrap();
    assert!(levels.starts_with("x1,x2,f,prob\n"));
    assert_eq!(levels.lines().count(), 1 + 100 * 100);
}

#[test]
fn infeasible_toy_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = chance(&[
        "run",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "problem=toy2d",
        "--set",
        "n=200",
        "--set",
        "p=0.99",
        "--set",
        "outer_max=1",
        "--set",
        "bund_max_iters=200",
        "--set",
        "levelsets_resolution=10",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("status=infeasible"));
}

#[test]
fn identical_runs_write_identical_logs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = chance(&["run", "--config", &repo_config("norm2.conf"), "--seed", "3", "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success());
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("iterates.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn written_config_reproduces_itself() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = chance(&["run", "--config", &repo_config("norm2.conf"), "--set", "pen2=1.6", "--out", a.path().to_str().unwrap()]);
    assert!(out.status.success());
    let first = a.path().join("config.txt");
    let out = chance(&["run", "--config", first.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(out.status.success());
    let strip_out = |p: &Path| {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("out ="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_out(&first), strip_out(&b.path().join("config.txt")));
    assert!(strip_out(&first).contains("pen2 = 1.6"));
}

#[test]
fn scenario_file_problem_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    // x1 + x2 <= b with b in 1..=10; p = 0.5 allows x1 + x2 <= 6
    let rows: String = (1..=10).map(|b| format!("1,1,{b}\n")).collect();
    fs::write(&data, rows).unwrap();
    let out = chance(&[
        "run",
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--set",
        &format!("problem=linear:{}", data.display()),
        "--set",
        "p=0.5",
        "--set",
        "upper=4,4",
        "--set",
        "start=0,0,0",
        "--set",
        "enforce_theory_ratio=true",
    ]);
    let summary = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(code(&out), 0, "{summary} {}", String::from_utf8_lossy(&out.stderr));
    let f: f64 = summary
        .split_whitespace()
        .find_map(|t| t.strip_prefix("f="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((f + 6.0).abs() < 1e-3, "{summary}");
}
