//! End-to-end runs of the `tortf` binary.

use std::process::{Command, Output};

fn tortf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tortf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const GAMMA: &str = "g^2 + g^4*w^1 + g^2*w^2 + g^1*w^4 + g^5*w^5 + w^6 + g^3*w^7 + g^2*w^8 + g^4*w^9";

#[test]
fn counting_suite_passes_on_the_smallest_field() {
    let o = tortf(&["verify", "counting", "--p", "3", "--n", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["suites"][0]["name"], "counting");
}

#[test]
fn unknown_suite_is_a_usage_error() {
    assert_eq!(tortf(&["verify", "everything"]).status.code(), Some(2));
}

#[test]
fn bad_configuration_is_a_usage_error() {
    assert_eq!(tortf(&["verify", "counting", "--p", "4"]).status.code(), Some(2));
    assert_eq!(tortf(&["verify", "counting", "--depth-cap", "6", "--prec", "8"]).status.code(), Some(2));
    assert_eq!(tortf(&["depth", "1+", "--p", "5"]).status.code(), Some(2));
}

#[test]
fn failing_suite_exits_one() {
    // the trivial character breaks the depth-0 identity at M = 1
    let o = tortf(&["verify", "moebius", "--depth-cap", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("\"status\": \"fail\""));
}

#[test]
fn output_is_deterministic() {
    let args = ["verify", "all", "--seed", "7", "--format", "csv", "--jobs", "2"];
    let a = tortf(&args);
    let b = tortf(&args);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("suite,status,checks,failures,first_counterexample\n"));
}

#[test]
fn transfer_csv_lists_every_stratum() {
    let t = "g^2 + w^1 + g^2*w^2 + w^3 + g^4*w^4 + g^7*w^5 + w^6 + g^5*w^7 + g^6*w^8 + g^2*w^9";
    let o = tortf(&["transfer", GAMMA, t, "--mode", "brute", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "gamma,t,depth,stratum_sum,partial_sum");
    assert_eq!(lines.len(), 1 + 4);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = std::env::temp_dir().join(format!("tortf-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.cfg");
    std::fs::write(&path, "p = 5\nn = 3\nformat = csv\n").unwrap();
    let o = tortf(&["depth", GAMMA, "--config", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["depth"], "0");
    assert_eq!(v["good"], true);
    std::fs::remove_dir_all(dir).ok();
}
