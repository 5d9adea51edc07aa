use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stabent::{demos, execute, ExperimentConfig};

fn stabent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabent")).args(args).output().expect("binary runs")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares a demo's artifacts with the stored copies; `STABENT_BLESS=1` rewrites them.
fn check_golden(demo: &str, command: &str, files: &[&str]) {
    let out = tempfile::tempdir().unwrap();
    let o = stabent(&["--demo", demo, "--out", out.path().to_str().unwrap(), command]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = golden_dir().join(format!("{demo}-{command}"));
    for f in files {
        let got = fs::read_to_string(out.path().join(f)).unwrap();
        if std::env::var_os("STABENT_BLESS").is_some() {
            fs::create_dir_all(&dir).unwrap();
            fs::write(dir.join(f), &got).unwrap();
            continue;
        }
        let want = fs::read_to_string(dir.join(f)).unwrap_or_else(|_| panic!("no golden copy of {demo}/{f}"));
        assert_eq!(got, want, "{demo} {command}: {f} changed");
    }
}

#[test]
fn golden_quadratic_bounds() {
    check_golden("quadratic-5.2", "bounds", &["bounds.json"]);
}

#[test]
fn golden_cubic_sweep() {
    check_golden("cubic-5.3", "sweep", &["sweep.csv", "sweep.json"]);
}

#[test]
fn golden_linear_entropy() {
    check_golden("linear-1d", "entropy", &["entropy.csv", "entropy.json"]);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = demos::source("linear-1d").unwrap().replace("dt = 0.02", "dt = 0.0");
    fs::write(&path, text).unwrap();
    let o = stabent(&["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "bounds"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.dt"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let text = demos::source("linear-1d").unwrap().replace("epsilon = 0.1", "epsilon = 0.1\nepsilonn = 0.2");
    assert!(ExperimentConfig::from_toml(&text).is_err());
}

#[test]
fn usage_errors_exit_nonzero() {
    assert_eq!(stabent(&["bounds"]).status.code(), Some(1));
    assert_eq!(stabent(&["--demo", "nope", "bounds"]).status.code(), Some(1));
    assert_eq!(stabent(&["--demo", "linear-1d", "--config", "x.toml", "bounds"]).status.code(), Some(2));
    assert_eq!(stabent(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fast.toml");
    // the closed loop decays at 3.5, slower than the envelope claims
    let text = demos::source("linear-1d").unwrap().replace("alpha = 3.0", "alpha = 10.0");
    fs::write(&path, text).unwrap();
    let o = stabent(&["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "verify"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("verify.csv").exists());
}

#[test]
fn demos_are_listed_and_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabent(&["--out", dir.path().to_str().unwrap(), "demos"]);
    assert!(o.status.success());
    let listed = String::from_utf8_lossy(&o.stdout);
    let names = demos::names();
    assert!(names.len() >= 5);
    for n in &names {
        assert!(listed.contains(n), "{n} missing from {listed}");
        let written = fs::read_to_string(dir.path().join(format!("{n}.toml"))).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&written).unwrap(), demos::config(n).unwrap());
    }
}

#[test]
fn every_demo_runs_bounds() {
    for n in demos::names() {
        let cfg = demos::config(n).unwrap();
        let out = execute(&stabent::Command::Bounds, &cfg, 1).unwrap();
        assert!(out.summary.starts_with(&format!("bounds {n}")), "{}", out.summary);
        assert_eq!(out.artifacts[0].name, "bounds.json");
    }
}

#[test]
fn configs_round_trip_through_toml() {
    for n in demos::names() {
        let cfg = demos::config(n).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{n}");
    }
}

#[test]
fn csv_has_header_and_plain_decimals() {
    let cfg = demos::config("quadratic-5.2").unwrap();
    let out = execute(&stabent::Command::Sweep, &cfg, 1).unwrap();
    let csv = &out.artifacts.iter().find(|a| a.name == "sweep.csv").unwrap().contents;
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("q,e,J"));
    for line in lines {
        assert_eq!(line.split(',').count(), 3);
        for cell in line.split(',') {
            cell.parse::<f64>().unwrap_or_else(|_| panic!("not a number: {cell}"));
        }
    }
}
