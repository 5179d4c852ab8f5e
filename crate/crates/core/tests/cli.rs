//! Command-line behaviour: exit codes, artifacts and manifest replay.

use std::fs;
use std::path::Path;

use mvldp::cli::run;
use serde_json::Value;

fn mvldp(args: &[&str]) -> i32 {
    let mut v = vec!["mvldp"];
    v.extend_from_slice(args);
    run(v)
}

fn out(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_writes_paths_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let code = mvldp(&["simulate", "--out", out(dir.path()), "--override", "sim.paths=2", "--override", "sim.horizon=0.1"]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "path_id,t,x0,y0,dk0");
    assert!(!csv.contains('\r'));
    let m = read_json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["sim"]["paths"], 2);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn manifest_replay_is_bit_exact() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--override", "laplace.paths=300", "--override", "scales.epsilon=[0.4,0.2]", "--seed", "5"];
    let mut first = vec!["laplace", "--out", out(a.path())];
    first.extend_from_slice(&args);
    assert_eq!(mvldp(&first), 0);
    let manifest = a.path().join("manifest.json");
    assert_eq!(mvldp(&["laplace", "--config", manifest.to_str().unwrap(), "--out", out(b.path())]), 0);
    let x = fs::read(a.path().join("laplace.csv")).unwrap();
    let y = fs::read(b.path().join("laplace.csv")).unwrap();
    assert_eq!(x, y);
    assert_eq!(read_json(&manifest)["config_sha256"], read_json(&b.path().join("manifest.json"))["config_sha256"]);
    let csv = String::from_utf8(x).unwrap();
    assert!(csv.starts_with("epsilon,gamma,value,stderr,n_paths\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["--override", "sim.paths=6", "--override", "sim.horizon=0.2"];
    let mut one = vec!["simulate", "--threads", "1", "--out", out(a.path())];
    one.extend_from_slice(&common);
    let mut many = vec!["simulate", "--threads", "8", "--out", out(b.path())];
    many.extend_from_slice(&common);
    assert_eq!(mvldp(&one), 0);
    assert_eq!(mvldp(&many), 0);
    assert_eq!(fs::read(a.path().join("paths.csv")).unwrap(), fs::read(b.path().join("paths.csv")).unwrap());
}

#[test]
fn rate_with_vanishing_diffusion_reports_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    let code = mvldp(&[
        "rate",
        "--out",
        out(dir.path()),
        "--override",
        "averaging.bbar=[0]",
        "--override",
        "averaging.abar=[0]",
        "--override",
        "rate.target=[0.5]",
    ]);
    assert_eq!(code, 0);
    let r = read_json(&dir.path().join("rate.json"));
    assert_eq!(r["converged"], false);
    assert!(r["diagnostic"].as_str().unwrap().starts_with("unreachable"));
}

#[test]
fn rate_json_fields() {
    let dir = tempfile::tempdir().unwrap();
    let code = mvldp(&["rate", "--out", out(dir.path()), "--override", "averaging.bbar=[0]", "--override", "averaging.abar=[0.5]"]);
    assert_eq!(code, 0);
    let r = read_json(&dir.path().join("rate.json"));
    // target 0.5 at t = 1 from the bundled configuration
    assert!((r["value"].as_f64().unwrap() - 0.25).abs() < 1e-3);
    assert_eq!(r["converged"], true);
    assert!(r["terminal_gap"].as_f64().unwrap() <= 1e-3);
    assert_eq!(r["control"].as_array().unwrap().len(), 32);
}

#[test]
fn average_and_hjb_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mvldp(&["average", "--out", out(dir.path()), "--override", "averaging.horizon=200"]), 0);
    let csv = fs::read_to_string(dir.path().join("average.csv")).unwrap();
    assert!(csv.starts_with("x0,bbar0,abar0_0,sigbar0_0,stderr_bbar0,stderr_abar0_0\n"));
    let code = mvldp(&[
        "hjb",
        "--out",
        out(dir.path()),
        "--override",
        "averaging.bbar=[0]",
        "--override",
        "averaging.abar=[0.6]",
        "--override",
        "hjb.snapshots=2",
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("hjb.csv")).unwrap();
    assert!(csv.starts_with("t,x,u\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 681);
}

#[test]
fn check_passes_on_the_bundled_scenario() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mvldp(&["check", "--out", out(dir.path()), "--override", "check.vi_paths=5"]), 0);
    let r = read_json(&dir.path().join("check.json"));
    assert_eq!(r["pass"], true);
    assert_eq!(r["lyapunov"]["pass"], true);
}

#[test]
fn failed_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // dY = −Y dt + dW sits exactly at the dissipativity boundary β = 2L
    let code = mvldp(&["check", "--out", out(dir.path()), "--override", "system.b2=[\"-y0\"]", "--override", "check.vi_paths=2"]);
    assert_eq!(code, 2);
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mvldp(&["simulate", "--bogus-flag"]), 1);
    assert_eq!(mvldp(&["frobnicate"]), 1);
    assert_eq!(mvldp(&["simulate", "--config", "/nonexistent.json", "--out", out(dir.path())]), 1);
    let bad = dir.path().join("bad.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string("configs/example5.json").unwrap()).unwrap();
    v["scales"] = serde_json::json!({"epsilon": 0.25, "gamma": 0.5});
    fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(mvldp(&["simulate", "--config", bad.to_str().unwrap(), "--out", out(dir.path())]), 1);
}
