use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn hoplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoplab"))
        .args(args)
        .env_remove("HOPPER_CONFIG")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn kin_fk_then_ik_roundtrips() {
    let fk = hoplab(&["kin", "fk", "0.1", "-0.2", "0.3"]);
    assert!(fk.status.success());
    let foot: Vec<String> = json(&fk)["foot"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.to_string())
        .collect();
    let mut args = vec!["kin", "ik"];
    args.extend(foot.iter().map(String::as_str));
    let ik = hoplab(&args);
    assert!(ik.status.success());
    let q = json(&ik)["motor_q"].clone();
    for (i, e) in [0.1, -0.2, 0.3].iter().enumerate() {
        assert!((q[i].as_f64().unwrap() - e).abs() < 1e-9);
    }
}

#[test]
fn sim_logs_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.csv");
    let log_s = log.to_str().unwrap();
    let out = hoplab(&[
        "sim",
        "--vx",
        "0.2",
        "--vy",
        "-0.1",
        "--duration",
        "1",
        "--seed",
        "3",
        "--randomize",
        "--terrain",
        "slope:4",
        "--conversion",
        "joint-target",
        "--log",
        log_s,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&out);
    assert_eq!(m["control_steps"], 50);
    assert_eq!(m["termination"], "horizon");
    let r = hoplab(&["replay", log_s]);
    assert!(r.status.success());
    assert!(json(&r)["first_mismatch"].is_null());
}

#[test]
fn sim_rejects_bad_arguments() {
    assert!(!hoplab(&["sim", "--terrain", "stairs"]).status.success());
    assert!(!hoplab(&["sim", "--conversion", "magic"]).status.success());
    assert!(!hoplab(&["sim", "--vx", "3.0"]).status.success());
    let policy = hoplab(&["sim", "--controller", "policy"]);
    assert_eq!(policy.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&policy.stderr).contains("--weights"));
}

#[test]
fn check_suite_reports_json() {
    let out = hoplab(&["check", "kinematics"]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["suites"][0]["suite"], "kinematics");
    assert!(!hoplab(&["check", "nonsense"]).status.success());
}

#[test]
fn invalid_config_fails_check_without_crashing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[geometry]\nlower = 0.03\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hoplab"))
        .arg("check")
        .env("HOPPER_CONFIG", &path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let r = json(&out);
    assert_eq!(r["passed"], false);
    assert_eq!(r["suites"][0]["suite"], "config");
    assert!(r["suites"][0]["checks"][0]["detail"]
        .as_str()
        .unwrap()
        .contains("lower"));
}

#[test]
fn config_flag_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.toml");
    std::fs::write(&path, "[episode]\nhorizon = 0.4\n").unwrap();
    let out = hoplab(&["--config", path.to_str().unwrap(), "sim"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["control_steps"], 20);
}

#[test]
fn serve_stdio_answers_requests() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hoplab"))
        .args(["serve", "--stdio", "--timeout", "10"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"type":"hello","version":1}}"#).unwrap();
    writeln!(stdin, r#"{{"type":"reset","seed":0}}"#).unwrap();
    writeln!(stdin, r#"{{"type":"step","action":[0,0,0]}}"#).unwrap();
    writeln!(stdin, r#"{{"type":"close"}}"#).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let types: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["type"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(types, ["ready", "obs", "transition", "ready"]);
}
