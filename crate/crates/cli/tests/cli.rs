use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfde-unfold"))
        .args(args)
        .env_remove("RFDE_RANK_TOL")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_example3_is_versal_with_rank_16() {
    let f = fixture("example3.json");
    let out = run(&["check", path_str(&f)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["report"]["rank_s"], 16);
    assert_eq!(v["report"]["versal"], true);
    assert!(v["report"]["s_decision"]["threshold"].is_number());
}

#[test]
fn check_without_parameters_is_inconclusive() {
    let f = fixture("example3_p0.json");
    let out = run(&["check", path_str(&f)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["report"]["versal"], false);
}

#[test]
fn analyze_example1_reports_one_block_of_two() {
    let f = fixture("example1.json");
    let out = run(&["analyze", path_str(&f)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["bases"]["spec"]["block_sizes"], serde_json::json!([[2]]));
    assert_eq!(v["bases"]["spec"]["delta"], 2);
}

#[test]
fn scalar_simplify_example1_uses_delays_zero_and_minus_one() {
    let f = fixture("example1.json");
    let out = run(&["synthesize", path_str(&f), "--scalar-simplify"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["synthesis"]["delays"], serde_json::json!([0.0, -1.0]));
    let taus: Vec<f64> = v["directions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["atoms"][0]["tau"].as_f64().unwrap())
        .collect();
    assert_eq!(taus, vec![0.0, 1.0]);
}

#[test]
fn synthesized_files_check_as_versal() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("example1.json", vec!["--scalar-simplify"]),
        ("example1.json", vec![]),
        ("example3.json", vec!["--real"]),
        ("example3.json", vec!["--grid", "17"]),
    ];
    for (k, (name, flags)) in cases.iter().enumerate() {
        let out_file = dir.path().join(format!("out{k}.json"));
        let f = fixture(name);
        let mut args = vec!["synthesize", path_str(&f)];
        args.extend(flags.iter().copied());
        args.extend(["--out", path_str(&out_file)]);
        assert_eq!(run(&args).status.code(), Some(0), "{name} {flags:?}");
        let checked = run(&["check", path_str(&out_file)]);
        assert_eq!(checked.status.code(), Some(0), "{name} {flags:?}");
        assert_eq!(json(&checked)["report"]["versal"], true);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("example3.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert_eq!(run(&["synthesize", path_str(&f), "--real", "--out", path_str(p)]).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    for cmd in ["analyze", "check", "validate"] {
        assert_eq!(run(&[cmd, path_str(&f)]).stdout, run(&[cmd, path_str(&f)]).stdout, "{cmd}");
    }
}

#[test]
fn validate_passes_on_both_examples() {
    for name in ["example1.json", "example3.json"] {
        let f = fixture(name);
        let out = run(&["validate", path_str(&f)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(json(&out)["suite"]["pass"], true);
    }
}

#[test]
fn malformed_input_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"format": 1, "atoms": [], "lambdas": [0]}"#).unwrap();
    let out = run(&["analyze", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("atoms"));
    let missing = run(&["check", path_str(&dir.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn rank_tolerance_comes_from_the_environment() {
    let f = fixture("example3.json");
    let out = Command::new(env!("CARGO_BIN_EXE_rfde-unfold"))
        .args(["check", path_str(&f)])
        .env("RFDE_RANK_TOL", "1e-6")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["report"]["rank_tol"], 1e-6);
    let bad = Command::new(env!("CARGO_BIN_EXE_rfde-unfold"))
        .args(["check", path_str(&f)])
        .env("RFDE_RANK_TOL", "lots")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
