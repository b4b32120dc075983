//! Exit-status contract and config validation for the command-line tool.

use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_masklab")
}

fn run_with(args: &[&str]) -> (i32, String) {
    let out = Command::new(bin()).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let (code, err) = run_with(&[
        "theory",
        "--config",
        "/nonexistent/config.json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "stderr: {err}");
    assert!(err.contains("cannot read config"));
}

#[test]
fn unknown_config_key_is_rejected_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"master_sed": 7}"#).unwrap();
    let (code, err) = run_with(&[
        "theory",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown field"), "stderr: {err}");
    assert!(err.contains("line"), "stderr: {err}");
}

#[test]
fn delta_out_of_range_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("delta.json");
    std::fs::write(&cfg, r#"{"delta": 1.5}"#).unwrap();
    let (code, err) = run_with(&[
        "concentration",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("delta"), "stderr: {err}");
}

#[test]
fn unknown_method_name_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("method.json");
    std::fs::write(&cfg, r#"{"method": "magic-mask"}"#).unwrap();
    let (code, err) = run_with(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown variant") || err.contains("method"), "stderr: {err}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (code, _) = run_with(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn zero_deviation_report_at_p_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p1.json");
    std::fs::write(
        &cfg,
        r#"{"ps": [1.0], "d": 60, "trials": 30, "trace": {"trials": 100}, "tail": {"trials": 200}}"#,
    )
    .unwrap();
    let out = tmp.path().join("o");
    let (code, err) = run_with(&[
        "concentration",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("concentration_report.json")).unwrap())
            .unwrap();
    let devs = report["deviations"][0]["max_deviation"].as_array().unwrap();
    for v in devs {
        assert!(v.as_f64().unwrap().abs() < 1e-9);
    }
    assert_eq!(report["deviations"][0]["violations"], 0);
}

#[test]
fn seed_flag_overrides_config_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("t.json");
    std::fs::write(
        &cfg,
        r#"{"master_seed": 7, "closed_form": {"instances": 2}, "dichotomy": {"instances": 1},
            "norm_bound": {"instances": 1, "trials": 100}}"#,
    )
    .unwrap();
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    for (out, seed) in [(&out1, "7"), (&out2, "9")] {
        let (code, err) = run_with(&[
            "theory",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stderr: {err}");
    }
    let a = std::fs::read_to_string(out1.join("theory_report.json")).unwrap();
    let b = std::fs::read_to_string(out2.join("theory_report.json")).unwrap();
    assert_ne!(a, b, "different seeds must change the report");
    let a_json: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(a_json["manifest"]["master_seed"], 7);
}

#[test]
fn workers_flag_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("t.json");
    std::fs::write(
        &cfg,
        r#"{"closed_form": {"instances": 2}, "dichotomy": {"instances": 1},
            "norm_bound": {"instances": 2, "trials": 500}}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    for (dir, workers) in [("w1", "1"), ("w4", "4")] {
        let out = tmp.path().join(dir);
        let (code, err) = run_with(&[
            "theory",
            "--config",
            cfg.to_str().unwrap(),
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "stderr: {err}");
        reports.push(std::fs::read_to_string(out.join("theory_report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn emitted_config_reproduces_identical_outputs() {
    // Re-reading the resolved config must reproduce the run byte-for-byte.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("t.json");
    std::fs::write(
        &cfg,
        r#"{"closed_form": {"instances": 3}, "dichotomy": {"instances": 2},
            "norm_bound": {"instances": 1, "trials": 200}, "dump_trajectories": 1}"#,
    )
    .unwrap();
    let first = tmp.path().join("first");
    let (code, err) = run_with(&[
        "theory",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {err}");

    let second = tmp.path().join("second");
    let (code, err) = run_with(&[
        "theory",
        "--config",
        first.join("config.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {err}");

    for entry in std::fs::read_dir(&first).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(first.join(&name)).unwrap();
        let b = std::fs::read(second.join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs after config round-trip");
    }
}

#[test]
fn manifest_lists_output_paths_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("t.json");
    std::fs::write(
        &cfg,
        r#"{"closed_form": {"instances": 2}, "dichotomy": {"instances": 1},
            "norm_bound": {"instances": 1, "trials": 100}}"#,
    )
    .unwrap();
    let out = tmp.path().join("o");
    let (code, err) = run_with(&[
        "theory",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {err}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let paths: Vec<String> = manifest["output_paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(paths.contains(&"theory_report.json".to_string()));
    assert!(paths.contains(&"config.json".to_string()));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    for p in paths {
        assert!(out.join(&p).exists(), "listed output {p} missing");
    }
}
