//! Exit codes and end-to-end subcommands of the `emofp` binary.

use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn emofp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emofp")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&emofp(&["--help"])), 0);
    assert_eq!(code(&emofp(&["frobnicate"])), 1);
    assert_eq!(code(&emofp(&["eval", "ttest", "--a", "1,2"])), 1);
}

#[test]
fn ttest_prints_reference_values() {
    let out = emofp(&["eval", "ttest", "--a", "1,2,3,4,5", "--b", "2,3,4,5,6"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["t_statistic"].as_f64().unwrap() + 1.0).abs() < 1e-12);
    assert!((v["degrees_of_freedom"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    let bad = emofp(&["eval", "ttest", "--a", "1", "--b", "2,3"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}

#[test]
fn fpr_from_score_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    fs::write(&path, "label,score\n1,0.9\n1,0.6\n0,0.7\n0,0.2\n0,0.1\n").unwrap();
    let out = emofp(&["eval", "fpr", "--scores", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["fpr_at_full_tpr"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    fs::write(&cfg, "out_dir = \"o\"\n[input]\nsource = \"dataset\"\ndir = \"d\"\n[window]\nwindow_seconds = 0\n").unwrap();
    assert_eq!(code(&emofp(&["--config", cfg.to_str().unwrap(), "pipeline", "run"])), 1);
    assert_eq!(code(&emofp(&["--jobs", "0", "eval", "ttest", "--a", "1,2", "--b", "3,4"])), 1);
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    fs::write(&cfg, "out_dir = \"o\"\n[input]\nsource = \"dataset\"\ndir = \"nowhere\"\n").unwrap();
    let out = emofp(&["--config", cfg.to_str().unwrap(), "pipeline", "run"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus"));
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"users_per_class": 8, "windows_per_user": 60, "start_year": 2015, "end_year": 2016}"#,
    )
    .unwrap();
    let run = |args: &[&str]| {
        let out = emofp(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["--seed", "3", "synth", "generate", "--spec", spec.to_str().unwrap(), "--out", &p("data"), "--raw"]);
    run(&["corpus", "build", "--posts", &p("data/raw_posts.jsonl"), "--config", &p("data/cohort_spec.json"), "--out", &p("corpus")]);
    run(&["emotion", "label", "--dataset", &p("corpus"), "--out", &p("emotion")]);
    run(&["fingerprint", "build", "--dataset", &p("corpus"), "--emotions", &p("emotion"), "--out", &p("fp")]);
    run(&["fingerprint", "analyze", "--store", &p("fp/fingerprints.csv"), "--out", &p("analysis")]);
    run(&["model", "train", "--store", &p("fp/fingerprints.csv"), "--task", "bd", "--model", "rf", "--out", &p("model.json")]);
    run(&["eval", "temporal", "--store", &p("fp/fingerprints.csv"), "--task", "mdd", "--model", "rf", "--gaps", "1", "--out", &p("temporal")]);
    let store = fs::read_to_string(p("fp/fingerprints.csv")).unwrap();
    assert_eq!(store.lines().count(), 33);
    assert!(dir.path().join("model.json").exists());
}
