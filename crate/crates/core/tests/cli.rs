use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eqfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqfree")).args(args).output().unwrap()
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_PROJECTIVE: &str = "[experiment]\nname = projective\nseed = 1\n\n[parameters]\nN = 10\nk = 10\ndt_micro = 1e-3\ndt_macro = 0.1\ndrift = zero\nn_steps = 500\n";

const ORDER_DETECT: &str = "[experiment]\nname = order-detect\nseed = 7\n\n[parameters]\ntarget = heat\nd_max = 2\nexpect_order = 2\n";

#[test]
fn successful_run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "p.cfg", SMALL_PROJECTIVE);
    let out = dir.path().join("out");
    let res = eqfree(&["projective", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("metric increment_std"));
    for f in ["summary.txt", "config.txt", "trajectory.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    // header plus the initial state plus one row per step
    assert_eq!(traj.lines().count(), 502);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("name = projective"));
}

#[test]
fn unknown_key_is_a_config_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bad.cfg", &format!("{SMALL_PROJECTIVE}bogus_key = 3\n"));
    let out = dir.path().join("out");
    let res = eqfree(&["projective", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("line 12") && stderr.contains("bogus_key"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn invalid_value_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bad.cfg", &SMALL_PROJECTIVE.replace("N = 10", "N = 0"));
    assert_eq!(eqfree(&["projective", "--config", &cfg]).status.code(), Some(2));
    let missing = dir.path().join("nope.cfg");
    assert_eq!(eqfree(&["projective", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(eqfree(&["projective"]).status.code(), Some(2));
}

#[test]
fn subcommand_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "p.cfg", SMALL_PROJECTIVE);
    let res = eqfree(&["kp", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("projective"));
}

#[test]
fn overwrite_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "o.cfg", ORDER_DETECT);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(eqfree(&["order-detect", "--config", &cfg, "--out", out]).status.code(), Some(0));
    let res = eqfree(&["order-detect", "--config", &cfg, "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--force"));
    assert_eq!(eqfree(&["order-detect", "--config", &cfg, "--out", out, "--force"]).status.code(), Some(0));
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "o.cfg", &ORDER_DETECT.replace("expect_order = 2", "expect_order = 3"));
    let out = dir.path().join("out");
    let res = eqfree(&["order-detect", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.ends_with("verdict fail\n"));
}

#[test]
fn seed_override_is_recorded_and_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "p.cfg", SMALL_PROJECTIVE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    eqfree(&["projective", "--config", &cfg, "--out", a.to_str().unwrap()]);
    eqfree(&["projective", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "99"]);
    let summary = fs::read_to_string(b.join("summary.txt")).unwrap();
    assert!(summary.contains("\nseed 99\n"));
    assert!(fs::read_to_string(b.join("config.txt")).unwrap().contains("seed = 99"));
    assert_ne!(
        fs::read(a.join("trajectory.csv")).unwrap(),
        fs::read(b.join("trajectory.csv")).unwrap()
    );
}
