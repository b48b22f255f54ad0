use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gdfractal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdfractal"))
        .args(args)
        .current_dir(dir)
        .env_remove("GDFRACTAL_THREADS")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn slice_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "slice",
            "--model",
            "matrix",
            "--y-diag",
            "1,0.5",
            "--d",
            "2",
            "--res",
            "24",
            "--max-iters",
            "300",
            "--seed",
            "7",
            "--quiet",
            "--out",
            out,
        ]
    };
    report(&gdfractal(dir.path(), &args("a")));
    report(&gdfractal(dir.path(), &args("b")));
    let a = std::fs::read(dir.path().join("a.pgm")).unwrap();
    let b = std::fs::read(dir.path().join("b.pgm")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_is_read_and_flags_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "# histogram window\nres = 6\neta = 0.2\n\ny = 2\n").unwrap();
    let r = report(&gdfractal(dir.path(), &["--config", "run.conf", "histogram", "--y", "1", "--quiet"]));
    assert_eq!(r["params"]["res"], "6");
    assert_eq!(r["params"]["y"], "1");
    assert_eq!(r["result"]["samples"], 36);

    std::fs::write(dir.path().join("bad.conf"), "res 6\n").unwrap();
    let out = gdfractal(dir.path(), &["--config", "bad.conf", "histogram"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_gdfractal"))
            .args(["basin", "--res", "30", "--quiet", "--out", out])
            .current_dir(dir.path())
            .env("GDFRACTAL_THREADS", threads)
            .output()
            .unwrap();
        report(&o);
        std::fs::read(dir.path().join(format!("{out}.pgm"))).unwrap()
    };
    assert_eq!(run("1", "one"), run("3", "three"));
    let bad = Command::new(env!("CARGO_BIN_EXE_gdfractal"))
        .args(["basin", "--res", "4", "--quiet"])
        .current_dir(dir.path())
        .env("GDFRACTAL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn invalid_arguments_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdfractal(dir.path(), &["slice", "--nx", "0", "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert_eq!(gdfractal(dir.path(), &["basin", "--eta", "-1", "--quiet"]).status.code(), Some(2));
    assert_eq!(gdfractal(dir.path(), &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&gdfractal(dir.path(), &["verify", "--samples", "20", "--quiet"]));
    assert_eq!(r["passed"], true);
}

#[test]
fn reports_carry_a_schema_version() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&gdfractal(dir.path(), &["orbits", "--period", "3", "--quiet"]));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "orbits");
}

#[test]
fn histogram_tables_are_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&gdfractal(dir.path(), &["histogram", "--res", "20", "--quiet", "--out", "h"]));
    assert!(r["result"]["support_fraction"].as_f64().unwrap() > 0.5);
    let text = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# gdfractal-histogram-csv v1"));
    assert!(lines.next().unwrap().starts_with("# gdfractal histogram schema=1"));
    assert_eq!(lines.next(), Some("u0,v0,outcome,sq_norm,imbalance,iterations"));
    assert_eq!(lines.count(), 400);
}

#[test]
fn empty_histogram_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&gdfractal(dir.path(), &["histogram", "--res", "0", "--quiet", "--out", "h"]));
    assert_eq!(r["result"]["samples"], 0);
    let text = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(),
        ["u0,v0,outcome,sq_norm,imbalance,iterations"]
    );
}

#[test]
fn critical_eta_of_the_default_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(&gdfractal(dir.path(), &["critical-eta", "--quiet"]));
    assert!((r["result"]["eta_star"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn progress_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdfractal(dir.path(), &["histogram", "--res", "4"]);
    report(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[gdfractal]"));
    let quiet = gdfractal(dir.path(), &["histogram", "--res", "4", "--quiet"]);
    assert!(quiet.stderr.is_empty());
}
