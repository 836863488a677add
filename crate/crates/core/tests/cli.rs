use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL_DISC: &str = r#"{
    "name": "small_disc",
    "measure": { "surface": "disc", "ac": { "kind": "gaussian", "center": [0.1, 0.0], "sigma": 0.3, "mass": 1.0 } },
    "chart": { "kind": "ball", "radius": 1.0, "n": 32 },
    "h_list": [0.05],
    "delta_list": [0.0],
    "schedule": { "kind": "geometric", "dt0": 1e-4, "growth": 1.5, "dt_max": 0.02 },
    "t_end": 0.2,
    "mass_gain": { "r": 0.25, "r_tilde": 0.5, "grid": 3 },
    "checks": ["chen"]
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricciflow")).args(args).output().expect("the binary runs")
}

fn scenario_file(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    std::fs::write(&path, SMALL_DISC).unwrap();
    path
}

fn shipped(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name).display().to_string()
}

#[test]
fn simulate_writes_dumps_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_file(dir.path());
    let out = dir.path().join("out");
    let o = run(&["simulate", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = walk(&out).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.iter().any(|n| n.ends_with(".csv")), "{names:?}");
    assert!(names.len() >= 2, "{names:?}");
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn verify_writes_a_report_that_report_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_file(dir.path());
    let out = dir.path().join("out");
    let o = run(&["verify", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS chen"));
    let report = out.join("report.json");
    let o = run(&["report", "--input", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS chen"));
}

#[test]
fn check_override_selects_checks() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_file(dir.path());
    let o = run(&["verify", "--scenario", sc.to_str().unwrap(), "--check", "mass_gain"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("mass_gain") && !stdout.contains("chen"), "{stdout}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["verify"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--scenario", "/nonexistent.json"]).status.code(), Some(2));
    let o = run(&["simulate", "--scenario", &shipped("empty.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("T = 0"));
}

#[test]
fn help_exits_cleanly() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["simulate", "verify", "report"] {
        assert!(String::from_utf8_lossy(&o.stdout).contains(sub));
    }
}
