use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiwell"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).expect("stderr error is JSON")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn print_config_round_trips() {
    let first = run(&["print-config"]);
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.json", std::str::from_utf8(&first.stdout).unwrap());
    let second = run(&["print-config", "--config", &path]);
    assert_eq!(json_stdout(&first), json_stdout(&second));
}

#[test]
fn analyze_double_well_default() {
    let v = json_stdout(&run(&["analyze"]));
    let pair = &v["pairs"][0];
    let action = pair["instanton"]["action"].as_f64().unwrap();
    assert!((action - 10.0).abs() < 1e-9, "{action}");
    let k0 = pair["gy"]["k0_analytic"].as_f64().unwrap();
    assert!((k0 - 2.0 * 3f64.sqrt()).abs() < 1e-3, "{k0}");
    assert_eq!(pair["two_level"]["degeneracy"], 1);
    assert!(v["provenance"]["config_sha256"].as_str().unwrap().len() == 64);
    let split = v["comparisons"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["quantity"] == "E1-E0")
        .expect("splitting comparison");
    assert!(split["relative"].as_f64().unwrap() <= 0.15);
}

#[test]
fn triple_well_return_pair_has_two_partners() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "triple.json",
        r#"{"potential":{"preset":"triple-well","lambda":1.0,"a":1.0},"hbar":0.02,"oracle":false}"#,
    );
    let v = json_stdout(&run(&["analyze", "--config", &cfg]));
    let pairs = v["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 2);
    for p in pairs {
        assert_eq!(p["two_level"]["degeneracy"], 2);
        let s = p["instanton"]["action"].as_f64().unwrap();
        assert!((s - 0.25).abs() < 1e-9);
    }
}

#[test]
fn malformed_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["{not json", r#"{"hbar": 1.0}"#, r#"{"potential":{"preset":"triple-well","lambda":1.0,"a":1.0},"hbar":-1.0}"#] {
        let cfg = write(dir.path(), "bad.json", body);
        let out = run(&["analyze", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        let e = error_json(&out);
        assert_eq!(e["error"]["exit_code"], 2);
        assert!(out.stdout.is_empty());
    }
    let out = run(&["analyze", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let out = run(&["sweep", "--values"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("empty"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["analyze", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}

#[test]
fn overlaps_csv_columns_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overlaps.csv");
    let out = run(&["overlaps", "--samples", "11", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["tau", "odd", "even", "oracle_odd", "oracle_even"]
    );
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    for r in &rows {
        for (ours, oracle) in [(r[1], r[3]), (r[2], r[4])] {
            assert!((ours - oracle).abs() <= 1e-10 * oracle.abs().max(1e-300), "{r:?}");
        }
    }
}

#[test]
fn runs_are_deterministic_apart_from_the_timestamp() {
    let strip = |mut v: Value| {
        v["provenance"].as_object_mut().unwrap().remove("timestamp");
        v
    };
    let a = strip(json_stdout(&run(&["gy"])));
    let b = strip(json_stdout(&run(&["gy"])));
    assert_eq!(a, b);
}

#[test]
fn coefficient_list_config() {
    let dir = tempfile::tempdir().unwrap();
    // (X² − 1)²: ω = 2√2 and amplitudes √(6ω), so K₀ = 2√3·ω.
    let cfg = write(dir.path(), "poly.json", r#"{"potential":{"poly":[1,0,-2,0,1]},"oracle":false}"#);
    let v = json_stdout(&run(&["gy", "--config", &cfg]));
    let k0 = v["gy"][0]["k0_analytic"].as_f64().unwrap();
    let exact = 2.0 * 3f64.sqrt() * 8f64.sqrt();
    assert!((k0 / exact - 1.0).abs() < 1e-3, "{k0} vs {exact}");
}
