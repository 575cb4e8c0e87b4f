use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::NamedTempFile;

fn bidgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bidgame")).args(args).output().unwrap()
}

fn json_out(args: &[&str]) -> Value {
    let out = bidgame(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn temp(contents: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

const BOWTIE: &str = r#"{"objective":"mean-payoff",
  "vertices":[{"id":"hi","weight":1},{"id":"lo","weight":0}],
  "edges":[["hi","hi"],["hi","lo"],["lo","hi"],["lo","lo"]]}"#;

const PATH: &str = r#"{"objective":"reachability",
  "vertices":[{"id":"t2","weight":0},{"id":"v0","weight":0},{"id":"v1","weight":0},{"id":"t1","weight":0,"target":true}],
  "edges":[["t2","t2"],["v0","t2"],["v0","v1"],["v1","v0"],["v1","t1"],["t1","t1"]]}"#;

#[test]
fn solve_rt_on_a_game_file() {
    let g = temp(BOWTIE);
    let v = json_out(&["solve-rt", "--game", g.path().to_str().unwrap(), "--p", "0.3"]);
    assert!((v["value"].as_f64().unwrap() - 0.3).abs() < 1e-6);
}

#[test]
fn thresholds_of_the_path_game() {
    let g = temp(PATH);
    let v = json_out(&["threshold", "--game", g.path().to_str().unwrap()]);
    let th = &v["thresholds"];
    assert!((th["v0"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-9);
    assert!((th["v1"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert_eq!(th["t1"].as_f64(), Some(0.0));
}

#[test]
fn qualitative_value_and_tie() {
    let v = json_out(&[
        "qual-value",
        "--th",
        "2/3",
        "--beta",
        "point:1",
        "--gamma",
        "uniform:1/5,1",
    ]);
    assert_eq!(v["value"], "1/2");
    assert_eq!(v["expected_payoff"].as_f64(), Some(0.0));
    let v = json_out(&["qual-value", "--th", "2/3", "--beta", "point:1", "--gamma", "point:1/2"]);
    assert_eq!(v["value"], "0");
}

#[test]
fn potential_gap_and_partial_value() {
    let v = json_out(&["potential", "--B", "1", "--gamma", "uniform:1,2"]);
    assert_eq!(v["potential"], "5/12");

    let v = json_out(&["gap", "--B", "1", "--gamma", "uniform:1,2"]);
    assert!((v["gap"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-4);

    let dist = temp(r#"{"atoms":[["1","1/2"],["5","1/2"]]}"#);
    let v = json_out(&[
        "partial-value",
        "--game",
        "bowtie",
        "--B",
        "1",
        "--gamma",
        dist.path().to_str().unwrap(),
    ]);
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() < 1e-4);
    assert_eq!(v["xs"].as_array().unwrap().len(), 2);
}

#[test]
fn ledger_check_reports_a_finite_bound() {
    let v = json_out(&["ledger-check", "--B", "1", "--gamma", "uniform:1,2", "--eps", "1/10"]);
    assert_eq!(v["verdict"], true);
    assert!(v["round_bound"].is_u64());
}

#[test]
fn oracle_on_the_bowtie() {
    let v = json_out(&["oracle", "--game", "bowtie", "--units", "5", "--horizon", "10"]);
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() <= 0.1);
}

#[test]
fn simulation_is_deterministic_and_csv_has_a_row_per_round() {
    let args = [
        "simulate",
        "--game",
        "bowtie",
        "--horizon",
        "25",
        "--max-policy",
        "random",
        "--seed",
        "7",
        "--csv",
    ];
    let a = bidgame(&args);
    let b = bidgame(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 26);

    let v = json_out(&[
        "simulate",
        "--game",
        "bowtie",
        "--B",
        "1",
        "--C",
        "2",
        "--horizon",
        "4000",
    ]);
    assert!((v["trailing"].as_f64().unwrap() - 1.0 / 3.0).abs() < 0.03);
}

#[test]
fn invalid_input_exits_with_one() {
    let g = temp(
        r#"{"objective":"mean-payoff","vertices":[{"id":"a","weight":0},{"id":"b","weight":0}],"edges":[["a","b"],["b","b"]]}"#,
    );
    let out = bidgame(&["solve-rt", "--game", g.path().to_str().unwrap(), "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = bidgame(&["potential", "--B", "1", "--gamma", "atoms:1@1/2,2@1/3"]);
    assert_eq!(out.status.code(), Some(1));

    let out = bidgame(&["solve-rt", "--game", "bowtie"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_with_two() {
    let g = temp(
        r#"{"objective":"mean-payoff",
          "vertices":[{"id":"a","weight":"1/3"},{"id":"b","weight":"-2/7"},{"id":"c","weight":"5/11"}],
          "edges":[["a","b"],["b","c"],["c","a"],["a","c"],["b","a"]]}"#,
    );
    let out = bidgame(&[
        "solve-rt",
        "--game",
        g.path().to_str().unwrap(),
        "--p",
        "0.37",
        "--tol",
        "1e-300",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
