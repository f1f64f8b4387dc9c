//! End-to-end tests of the mvpois binary: exit codes, CSV determinism,
//! and generate/validate round trips.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvpois"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const CONST_RATE: &str = "\
p = 3
n = 50000
seed = 42
lambda = 2 2 2
corr_row = 1 0.4 0.4
corr_row = 0.4 1 0.4
corr_row = 0.4 0.4 1
";

const MIXED_RATE: &str = "\
p = 3
n = 50000
seed = 42
lambda = 5 10 15
corr_row = 1 -0.4 0.4
corr_row = -0.4 1 0.5
corr_row = 0.4 0.5 1
";

#[test]
fn generate_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", CONST_RATE);
    let out = dir.path().join("s.csv").to_string_lossy().into_owned();
    let res = run(&["generate", "--config", &cfg, "--out", &out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("seed = 42"));
    assert!(stdout.contains("empirical_corr[0]"));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("x1,x2,x3\n"));
    assert_eq!(csv.lines().count(), 50_001);
}

#[test]
fn generate_zero_n_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", CONST_RATE);
    let res = run(&["generate", "--config", &cfg, "--n", "0", "--out", "/dev/null"]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.starts_with("error[config]"), "{stderr}");
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", CONST_RATE);
    let out1 = dir.path().join("a.csv").to_string_lossy().into_owned();
    let out2 = dir.path().join("b.csv").to_string_lossy().into_owned();
    assert!(run(&["generate", "--config", &cfg, "--out", &out1]).status.success());
    assert!(run(&["generate", "--config", &cfg, "--out", &out2]).status.success());
    assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn generate_then_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [("const.cfg", CONST_RATE), ("mixed.cfg", MIXED_RATE)] {
        let cfg = write_config(dir.path(), name, body);
        for seed in ["1", "2", "3"] {
            let out = dir
                .path()
                .join(format!("{name}.{seed}.csv"))
                .to_string_lossy()
                .into_owned();
            let gen = run(&["generate", "--config", &cfg, "--seed", seed, "--out", &out]);
            assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
            // validate reads the seed from the config, which only affects labels
            let val = run(&["validate", "--csv", &out, "--config", &cfg]);
            assert!(
                val.status.success(),
                "validate failed for {name} seed {seed}: {}",
                String::from_utf8_lossy(&val.stderr)
            );
            assert!(String::from_utf8_lossy(&val.stdout).contains("pass = true"));
        }
    }
}

#[test]
fn validate_detects_shuffled_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", CONST_RATE);
    let out = dir.path().join("s.csv").to_string_lossy().into_owned();
    assert!(run(&["generate", "--config", &cfg, "--out", &out]).status.success());

    // cyclically shift one column to destroy the dependence
    let text = fs::read_to_string(&out).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    let mut col0: Vec<&str> = Vec::new();
    let mut rest: Vec<Vec<&str>> = Vec::new();
    for l in &lines {
        let mut it = l.split(',');
        col0.push(it.next().unwrap());
        rest.push(it.collect());
    }
    col0.rotate_left(lines.len() / 2);
    let mut shuffled = String::from(header);
    shuffled.push('\n');
    for (c0, r) in col0.iter().zip(&rest) {
        shuffled.push_str(c0);
        for v in r {
            shuffled.push(',');
            shuffled.push_str(v);
        }
        shuffled.push('\n');
    }
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, shuffled).unwrap();

    let res = run(&["validate", "--csv", &bad.to_string_lossy(), "--config", &cfg]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error[validation]"));
}

#[test]
fn validate_detects_wrong_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg4 = write_config(dir.path(), "rate4.cfg", &CONST_RATE.replace("lambda = 2 2 2", "lambda = 4 4 4"));
    let cfg2 = write_config(dir.path(), "rate2.cfg", CONST_RATE);
    let out = dir.path().join("s4.csv").to_string_lossy().into_owned();
    assert!(run(&["generate", "--config", &cfg4, "--out", &out]).status.success());
    let res = run(&["validate", "--csv", &out, "--config", &cfg2]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn validate_dimension_mismatch_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", CONST_RATE);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x1,x2\n1,2\n").unwrap();
    let res = run(&["validate", "--csv", &bad.to_string_lossy(), "--config", &cfg]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_config_is_io_error() {
    let res = run(&["generate", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(res.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error[io]"));
}

#[test]
fn infeasible_target_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.cfg",
        "p = 2\nn = 1000\nseed = 1\nlambda = 0.1 0.1\ncorr_row = 1 -0.9\ncorr_row = -0.9 1\napply_correction = true\n",
    );
    let res = run(&["generate", "--config", &cfg, "--out", "/dev/null"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error[infeasible]"));
}

#[test]
fn bounds_command() {
    let res = run(&["bounds", "10", "10", "--grid-size", "50000"]);
    assert!(res.status.success());
    let out = String::from_utf8_lossy(&res.stdout);
    assert!(out.contains("min_corr = -0.9"));
    let res = run(&["bounds", "0.01", "0.01"]);
    let out = String::from_utf8_lossy(&res.stdout);
    let min: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("min_corr = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(min > -0.05 && min <= 0.0);
    // under-resolved grid is rejected
    let res = run(&["bounds", "2", "2", "--grid-size", "10"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn correct_command() {
    let res = run(&["correct", "0.5", "0.5", "0.3"]);
    assert!(res.status.success());
    let res = run(&["correct", "0.1", "0.1", "-0.9"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn demo_const_and_mixed() {
    for exp in ["const-rate", "mixed-rate"] {
        let res = run(&["demo", exp]);
        assert!(res.status.success(), "{exp}");
        let out = String::from_utf8_lossy(&res.stdout);
        assert!(out.contains("pass = true"), "{exp}: {out}");
    }
}

#[test]
fn clt_sampler_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", CONST_RATE);
    let a = dir.path().join("a.csv").to_string_lossy().into_owned();
    let b = dir.path().join("b.csv").to_string_lossy().into_owned();
    assert!(run(&["generate", "--config", &cfg, "--out", &a, "--sampler", "exact"]).status.success());
    assert!(run(&["generate", "--config", &cfg, "--out", &b, "--sampler", "clt"]).status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
