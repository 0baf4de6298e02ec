use std::process::Command;

fn jdisc(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_jdisc")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn missing_config_exits_3() {
    let (code, _, err) = jdisc(&["r6", "--config", "/definitely/not/here.json"]);
    assert_eq!(code, 3);
    assert!(err.contains("cannot read config"), "{err}");
}

#[test]
fn bad_arguments_exit_3() {
    assert_eq!(jdisc(&["no-such-command"]).0, 3);
    assert_eq!(jdisc(&["solve-disc", "--structure", "nope"]).0, 3);
    assert_eq!(jdisc(&["solve-disc", "--grid", "20"]).0, 3);
    assert_eq!(jdisc(&["solve-disc", "--point", "0,0"]).0, 3);
}

#[test]
fn tcg_test_passes() {
    let (code, out, _) = jdisc(&["tcg-test", "--grid", "64"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["metadata"]["summary"]["interior_error.max"].as_f64().unwrap() <= 5e-2);
}

#[test]
fn r6_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r6.json");
    let csv = dir.path().join("r6.csv");
    let (code, _, err) = jdisc(&[
        "r6",
        "--grid",
        "64",
        "--out",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let cols: Vec<&str> = v["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    for c in ["laplacian", "grad_ratio", "lower_bound"] {
        assert!(cols.contains(&c), "{cols:?}");
    }
    assert!(v["config_hash"].as_str().unwrap().len() == 64);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + v["rows"].as_array().unwrap().len());
}

#[test]
fn config_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"grid": 32, "deltas": [0.1, 0.01]}"#).unwrap();
    let (code, out, err) = jdisc(&["cz", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["metadata"]["grid"], 32);
    std::fs::write(&cfg, r#"{"grid": "large"}"#).unwrap();
    assert_eq!(jdisc(&["cz", "--config", cfg.to_str().unwrap()]).0, 3);
}

#[test]
fn solver_divergence_exits_2() {
    let (code, _, err) = jdisc(&["solve-disc", "--grid", "32", "--structure", "chirka-perturbed(2)", "--vector", "1,0,0,0"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn hypothesis_violation_exits_1() {
    // the loglinear gauge needs chi_far < 1
    let (code, _, _) = jdisc(&["divergence", "--gauge", "loglinear", "--far", "1"]);
    assert_eq!(code, 1);
}

#[test]
fn disc_commands() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("disc.csv");
    let (code, out, err) = jdisc(&["jet", "--grid", "32", "--structure", "chirka-perturbed(0.05)", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["report"]["target_error"].as_f64().unwrap() < 1e-6);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("N,32,n,2"));
    let (code, out, _) = jdisc(&["kobayashi", "--grid", "32", "--budget", "20"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["upper_bound"].as_f64().unwrap() - 1.0).abs() < 0.1);
    let (code, out, _) = jdisc(&["frobenius"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["ddc"].as_f64().unwrap() - 1.0).abs() < 1e-5);
    let (code, out, _) = jdisc(&["psh-check", "--function", "x1^2 + y1^2 + x2^2 + y2^2", "--vector", "1,0,0,0"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["levi"].as_f64().unwrap() - 4.0).abs() < 1e-9);
}
