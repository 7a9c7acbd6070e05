//! End-to-end checks of the binary: exit codes, report shape, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bekk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bekk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SCALAR_UNIT: &str = r#"{
  "d": 1, "q": 1, "l": 1,
  "C": [[1.0]],
  "A": [{"lag": 1, "index": 1, "matrix": [[1.0]]}]
}"#;

#[test]
fn analyze_scalar_produces_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scalar.json", SCALAR_UNIT);
    let out = bekk(&["analyze", &cfg, "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["report_version"], 1);
    for section in [
        "spec_echo",
        "structure",
        "stationarity",
        "tail_theory",
        "tail_empirics",
        "assumptions",
        "provenance",
    ] {
        assert!(!report[section].is_null(), "missing section {section}");
    }
    // Theory: alpha = 2 for the unit scalar; constants attached.
    let alpha = report["tail_theory"]["per_component"][0]["alpha"].as_f64().unwrap();
    assert!((alpha - 2.0).abs() < 1e-9);
    assert!(report["tail_theory"]["constants"]["c_plus"]["value"].as_f64().unwrap() > 0.0);
    // Unrequested sections are explicitly skipped.
    assert!(report["tail_empirics"]["skipped"].is_string());
    assert!(report["assumptions"]["skipped"].is_string());
    assert_eq!(report["stationarity"]["verdict"], "Stationary");
}

#[test]
fn same_seed_is_byte_identical_modulo_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scalar.json", SCALAR_UNIT);
    let strip = |bytes: &[u8]| -> String {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        v["provenance"]
            .as_object_mut()
            .unwrap()
            .remove("wall_time");
        serde_json::to_string_pretty(&v).unwrap()
    };
    let a = bekk(&["analyze", &cfg, "--seed", "11"]);
    let b = bekk(&["analyze", &cfg, "--seed", "11"]);
    assert_eq!(strip(&a.stdout), strip(&b.stdout));
    let c = bekk(&["analyze", &cfg, "--seed", "12"]);
    assert_ne!(strip(&a.stdout), strip(&c.stdout));
}

#[test]
fn indefinite_intercept_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{
          "d": 2, "q": 1, "l": 1,
          "C": [[1.0, 2.0], [2.0, 1.0]],
          "A": [{"lag": 1, "index": 1, "matrix": [[0.5, 0.0], [0.0, 0.5]]}]
        }"#,
    );
    let out = bekk(&["analyze", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("positive definite"));
}

#[test]
fn missing_config_exits_2() {
    let out = bekk(&["analyze", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn require_stationary_exits_4_on_explosive_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "explosive.json",
        r#"{
          "d": 1, "q": 1, "l": 1,
          "C": [[1.0]],
          "A": [{"lag": 1, "index": 1, "matrix": [[2.0]]}]
        }"#,
    );
    let out = bekk(&["analyze", &cfg, "--require-stationary"]);
    assert_eq!(out.status.code(), Some(4));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["stationarity"]["verdict"], "NonStationary");
    assert!(report["tail_theory"]["skipped"].is_string());
    // Without the flag the same model exits 0.
    let out = bekk(&["analyze", &cfg]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn failed_assumption_certification_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Diagonal with l = 1: irreducibility density fails (rank-one images)
    // and proximality density fails with no search fallback.
    let cfg = write_config(
        dir.path(),
        "diag.json",
        r#"{
          "d": 2, "q": 1, "l": 1,
          "C": [[1.0, 0.0], [0.0, 1.0]],
          "A": [{"lag": 1, "index": 1, "matrix": [[0.5, 0.0], [0.0, 0.8]]}]
        }"#,
    );
    let out = bekk(&["analyze", &cfg, "--check-assumptions"]);
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let statuses: Vec<&str> = report["assumptions"]["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["status"].as_str().unwrap())
        .collect();
    assert!(statuses.contains(&"Fails"), "{statuses:?}");
}

#[test]
fn simulate_and_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scalar.json", SCALAR_UNIT);
    let csv_dir = dir.path().join("csv");
    let out = bekk(&[
        "analyze",
        &cfg,
        "--simulate",
        "--samples",
        "20000",
        "--replicas",
        "16",
        "--emit-csv",
        csv_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let comps = report["tail_empirics"]["components"].as_array().unwrap();
    assert_eq!(comps.len(), 1);
    assert!(comps[0]["hill"]["alpha_hat"].as_f64().unwrap() > 0.0);
    assert_eq!(comps[0]["verdict"], "Consistent");
    for f in ["ensemble.csv", "hill_curve.csv", "survival.csv"] {
        let path = csv_dir.join(f);
        assert!(path.exists(), "missing {f}");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().count() > 1, "{f} is empty");
    }
    let ensemble = std::fs::read_to_string(csv_dir.join("ensemble.csv")).unwrap();
    assert!(ensemble.starts_with("t,v1\n"));
}

#[test]
fn reproduce_known_and_unknown_examples() {
    let out = bekk(&["reproduce", "5.2"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("example 5.2: PASS"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");

    let out = bekk(&["reproduce", "9.9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownExample"));
}

#[test]
fn reproduce_assumption_examples() {
    for id in ["7.5", "7.6"] {
        let out = bekk(&["reproduce", id]);
        assert!(
            out.status.success(),
            "{id}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}
