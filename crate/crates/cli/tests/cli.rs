//! End-to-end tests of the `apart` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn apart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apart"))
        .args(args)
        .output()
        .expect("failed to run apart")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("apart_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn pipeline_gen_compare_analyze() {
    let dir = tmp_dir("pipeline");
    let csv = dir.join("ac.csv");
    let out = dir.join("out");

    let gen = apart(&[
        "gen-data",
        "--function",
        "anomaly-crest",
        "--n",
        "200",
        "--noise",
        "0.01",
        "--seed",
        "7",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,y\n"));
    assert_eq!(text.lines().count(), 201);

    let cmp = apart(&[
        "compare",
        "--data",
        csv.to_str().unwrap(),
        "--features",
        "x",
        "--labels",
        "y",
        "--profile",
        "desk",
        "--repeats",
        "1",
        "--partition-epochs",
        "10",
        "--initial-models",
        "2",
        "--adding-check-period",
        "0",
        "--dropping-check-period",
        "0",
        "--search-runs",
        "2",
        "--expert-epochs",
        "20",
        "--master-seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(cmp.status.success(), "{}", String::from_utf8_lossy(&cmp.stderr));
    for name in ["report.json", "runs.csv", "histogram.svg"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);

    let analyze = apart(&["analyze", "--report", out.join("report.json").to_str().unwrap()]);
    assert!(analyze.status.success());
    let table = String::from_utf8_lossy(&analyze.stdout);
    assert!(table.contains("modular mean loss"));
    assert!(table.contains("perf_value_%"));
}

#[test]
fn partition_writes_result_json_and_config_file_applies() {
    let dir = tmp_dir("partition");
    let csv = dir.join("wc.csv");
    apart(&[
        "gen-data",
        "--function",
        "wave-climb",
        "--n",
        "150",
        "--seed",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let cfg = dir.join("cfg.txt");
    std::fs::write(&cfg, "# tiny run\npartition_epochs = 8\ninitial_models=3\n").unwrap();
    let result = dir.join("result.json");
    let out = apart(&[
        "partition",
        "--data",
        csv.to_str().unwrap(),
        "--features",
        "x",
        "--labels",
        "y",
        "--config",
        cfg.to_str().unwrap(),
        "--adding-check-period",
        "0",
        "--dropping-check-period",
        "0",
        "--out",
        result.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(json["final_winners"].as_array().unwrap().len(), 150);
    // 8 epochs from the config file, not the profile's default
    assert_eq!(json["history"].as_array().unwrap().len(), 8);
}

#[test]
fn rejections_exit_nonzero_with_diagnostic() {
    let bad_fn = apart(&["gen-data", "--function", "nope", "--out", "/dev/null"]);
    assert!(!bad_fn.status.success());
    assert!(String::from_utf8_lossy(&bad_fn.stderr).contains("unknown function"));

    let bad_key = apart(&[
        "compare",
        "--data",
        "/nonexistent.csv",
        "--features",
        "x",
        "--labels",
        "y",
        "--out",
        "/tmp/never",
    ]);
    assert!(!bad_key.status.success());
    assert!(String::from_utf8_lossy(&bad_key.stderr).starts_with("error:"));

    let bad_profile = apart(&[
        "compare",
        "--data",
        "/nonexistent.csv",
        "--features",
        "x",
        "--labels",
        "y",
        "--profile",
        "huge",
        "--out",
        "/tmp/never",
    ]);
    assert!(!bad_profile.status.success());
    assert!(String::from_utf8_lossy(&bad_profile.stderr).contains("unknown profile"));
}
