//! End-to-end checks of the `feedmix` binary: exit codes, report formats and
//! sweep output.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::NamedTempFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feedmix"))
}

fn write_file(json: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(json.as_bytes()).unwrap();
    f
}

fn run(args: &[&str], path: &Path) -> Output {
    let mut cmd = bin();
    cmd.arg(args[0]).arg(path).args(&args[1..]);
    cmd.output().unwrap()
}

fn feedstock(name: &str, lambda: f64, c: f64, big_c: f64, mu: f64, w: Option<f64>) -> String {
    let w = w.map(|v| v.to_string()).unwrap_or_else(|| "null".into());
    format!(
        r#"{{"name": "{name}", "lambda": {lambda}, "c": {c}, "C": {big_c}, "mu": {mu}, "W": {w}}}"#
    )
}

fn scenario_json(q: f64, gamma: f64, r: f64, feedstocks: &[String]) -> String {
    format!(
        r#"{{"Q": {q}, "gamma": {gamma}, "r": {r}, "feedstocks": [{}]}}"#,
        feedstocks.join(",")
    )
}

#[test]
fn check_exit_codes() {
    let feasible = write_file(&scenario_json(
        15.0,
        0.5,
        1.0,
        &[
            feedstock("a", 1.0, 0.0, 0.0, 1.0, Some(10.0)),
            feedstock("b", 1.0, 0.0, 0.0, 1.0, Some(10.0)),
        ],
    ));
    let out = run(&["check"], feasible.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FEASIBLE"));

    // demand exactly equal to capacity: strict inequality fails
    let boundary = write_file(&scenario_json(
        20.0,
        0.5,
        1.0,
        &[
            feedstock("a", 1.0, 0.0, 0.0, 1.0, Some(10.0)),
            feedstock("b", 1.0, 0.0, 0.0, 1.0, Some(10.0)),
        ],
    ));
    let out = run(&["check"], boundary.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("INFEASIBLE"));

    let missing = write_file(r#"{"Q": 1.0, "r": 1.0, "feedstocks": []}"#);
    let out = run(&["check"], missing.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn solve_linear_free_table() {
    let file = write_file(&scenario_json(
        3.0,
        0.5,
        1.0,
        &[
            feedstock("cheap", 1.0, 1.0, 0.0, 1.0, None),
            feedstock("dear", 1.0, 2.0, 0.0, 1.0, None),
        ],
    ));
    let out = run(&["solve"], file.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("LinearFree"));
    assert!(text.contains("objective: 6.00000"));
    assert!(text.contains("cheap"));
}

#[test]
fn solve_analytic_agrees_with_oracle() {
    let file = write_file(&scenario_json(
        2.0,
        0.5,
        1.0,
        &[
            feedstock("a", 1.0, 1.0, 0.0, 1.0, Some(10.0)),
            feedstock("b", 1.0, 1.0, 0.0, 1.0, Some(10.0)),
        ],
    ));
    let parse_obj = |out: &Output| -> f64 {
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["objective"].as_f64().unwrap()
    };
    let a = run(&["solve", "--method", "analytic", "--format", "json"], file.path());
    let o = run(&["solve", "--method", "oracle", "--format", "json"], file.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(o.status.code(), Some(0));
    let (fa, fo) = (parse_obj(&a), parse_obj(&o));
    assert!((fa - fo).abs() <= 1e-6 * fa, "analytic {fa} vs oracle {fo}");
}

#[test]
fn oracle_refuses_large_n() {
    let recs: Vec<String> = (0..5)
        .map(|i| feedstock(&format!("f{i}"), 1.0, 1.0, 0.0, 1.0, None))
        .collect();
    let file = write_file(&scenario_json(1.0, 0.5, 1.0, &recs));
    let out = run(&["solve", "--method", "oracle"], file.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn analytic_refuses_general_regime() {
    let file = write_file(&scenario_json(
        1.0,
        0.5,
        2.0,
        &[feedstock("a", 1.0, 1.0, 0.0, 1.0, None)],
    ));
    let out = run(&["solve", "--method", "analytic"], file.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_infeasible_exit_code() {
    let file = write_file(&scenario_json(
        50.0,
        0.5,
        1.0,
        &[feedstock("a", 1.0, 0.0, 0.0, 1.0, Some(10.0))],
    ));
    let out = run(&["solve"], file.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn potentials_marks_and_verdict() {
    let file = write_file(&scenario_json(
        1.0,
        0.5,
        1.0,
        &[
            feedstock("mid", 1.0, 1.0, 0.0, 1.0, None),
            feedstock("high", 1.0, 2.0, 0.0, 1.0, None),
            feedstock("low", 1.0, 0.0, 0.0, 1.0, None),
        ],
    ));
    let out = run(&["potentials"], file.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let high_line = text.lines().find(|l| l.contains("high")).unwrap();
    assert!(high_line.contains("max"));
    let low_line = text.lines().find(|l| l.contains("low")).unwrap();
    assert!(low_line.contains("min"));
    assert!(text.contains("NOT INTERCHANGEABLE"));

    let equal = write_file(&scenario_json(
        1.0,
        0.5,
        1.0,
        &[
            feedstock("a", 1.0, 1.0, 0.0, 1.0, None),
            feedstock("b", 1.0, 1.0, 0.0, 1.0, None),
        ],
    ));
    let out = run(&["potentials"], equal.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.trim() == "INTERCHANGEABLE"));

    let nonlinear = write_file(&scenario_json(
        1.0,
        0.5,
        2.0,
        &[feedstock("a", 1.0, 1.0, 0.0, 1.0, None)],
    ));
    let out = run(&["potentials"], nonlinear.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("INTERCHANGEABLE"));
    assert!(text.contains("note:"));
}

#[test]
fn sweep_reservoir_crosses_existence_boundary() {
    let file = write_file(&scenario_json(
        8.0,
        0.5,
        1.0,
        &[
            feedstock("a", 1.0, 0.0, 0.0, 1.0, Some(10.0)),
            feedstock("b", 1.0, 0.0, 0.0, 1.0, Some(5.0)),
        ],
    ));
    let out = run(
        &["sweep", "--param", "W[0]", "--from", "10", "--to", "1", "--steps", "10"],
        file.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let w0: f64 = cols[0].parse().unwrap();
        let feasible = cols[1] == "true";
        // capacity is w0 + 5, demand 8: feasible iff w0 > 3 strictly
        assert_eq!(feasible, w0 + 5.0 > 8.0, "row {row}");
        if !feasible {
            assert!(cols[2].is_empty() && cols[6].is_empty());
        }
    }
}

#[test]
fn sweep_cost_flips_active_support() {
    let file = write_file(&scenario_json(
        1.0,
        0.5,
        1.0,
        &[
            feedstock("a", 1.0, 0.5, 0.0, 1.0, None),
            feedstock("b", 1.0, 2.0, 0.0, 1.0, None),
        ],
    ));
    // P_0 = c_0 + 1 crosses P_1 = 3 at c_0 = 2
    let out = run(
        &["sweep", "--param", "c[0]", "--from", "0.5", "--to", "3.5", "--steps", "7"],
        file.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for row in text.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let c0: f64 = cols[0].parse().unwrap();
        let support: u64 = cols[5].parse().unwrap();
        if c0 < 2.0 {
            assert_eq!(support, 1, "row {row}");
        } else if c0 > 2.0 {
            assert_eq!(support, 2, "row {row}");
        }
    }
}

#[test]
fn sweep_minimal_steps_and_file_output() {
    let file = write_file(&scenario_json(
        1.0,
        0.5,
        1.0,
        &[feedstock("a", 1.0, 1.0, 0.0, 1.0, None)],
    ));
    let out_file = NamedTempFile::new().unwrap();
    let out = bin()
        .arg("sweep")
        .arg(file.path())
        .args(["--param", "Q", "--from", "1", "--to", "2", "--steps", "2", "--out"])
        .arg(out_file.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(out_file.path()).unwrap();
    assert_eq!(text.lines().count(), 3); // header + 2 data rows
    assert!(text.starts_with("param,feasible,F,xi,regime,support,x0"));
}

#[test]
fn sweep_invalid_selector() {
    let file = write_file(&scenario_json(
        1.0,
        0.5,
        1.0,
        &[feedstock("a", 1.0, 1.0, 0.0, 1.0, None)],
    ));
    let out = run(
        &["sweep", "--param", "nope", "--from", "1", "--to", "2", "--steps", "2"],
        file.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_report_reparses_to_full_precision() {
    let file = write_file(&scenario_json(
        2.0,
        0.5,
        1.0,
        &[
            feedstock("a", 1.0, 1.0, 0.0, 1.0, Some(10.0)),
            feedstock("b", 1.0, 1.0, 0.0, 1.0, Some(10.0)),
        ],
    ));
    let csv = run(&["solve", "--method", "analytic", "--format", "csv"], file.path());
    let json = run(&["solve", "--method", "analytic", "--format", "json"], file.path());
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let text = String::from_utf8_lossy(&csv.stdout);
    for (i, row) in text.lines().skip(1).enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        let x: f64 = cols[1].parse().unwrap();
        assert_eq!(x, v["mix"][i].as_f64().unwrap());
    }
}
