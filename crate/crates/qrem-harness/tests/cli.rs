//! CLI contract tests: exit codes, the QREM_SEED fallback, and the
//! file-based subcommand flow.

use std::path::Path;
use std::process::{Command, Output};

fn qrem(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qrem"));
    cmd.args(args).env_remove("QREM_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn qrem")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "n": 1,
  "channel": {"kind": "nonlinear", "n": 1, "flip_rates": [[0.05, 0.05]], "kappa": 0.2},
  "train_size": 60,
  "test_size": 15,
  "shots": 512,
  "nn": {"hidden_layers": 2, "hidden_width": 10, "epochs": 30, "learning_rate": 0.001},
  "li_shots": 512,
  "seed": 5,
  "mode": "standard"
}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_is_a_validation_error() {
    let out = qrem(&["benchmark"], &[]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"n": 0}"#).unwrap();
    let out = qrem(&["--config", path.to_str().unwrap(), "benchmark"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("explode.json");
    // An absurd learning rate drives the weights to overflow and the loss to
    // NaN within a few updates.
    std::fs::write(
        &path,
        r#"{
  "n": 1,
  "channel": {"kind": "nonlinear", "n": 1, "flip_rates": [[0.05, 0.05]], "kappa": 0.2},
  "train_size": 40,
  "test_size": 10,
  "shots": 256,
  "nn": {"hidden_layers": 2, "hidden_width": 8, "epochs": 20, "learning_rate": 1e300},
  "li_shots": 256,
  "seed": 5,
  "mode": "standard"
}"#,
    )
    .unwrap();
    let out = qrem(
        &["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "benchmark"],
        &[],
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite loss"));
}

#[test]
fn qrem_seed_env_is_a_fallback_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    // Same env seed twice: identical reports, and different from the config
    // seed's report.
    let a = qrem(&["--config", &config, "--out", &out_dir("a"), "benchmark"], &[("QREM_SEED", "99")]);
    let b = qrem(&["--config", &config, "--out", &out_dir("b"), "benchmark"], &[("QREM_SEED", "99")]);
    let c = qrem(&["--config", &config, "--out", &out_dir("c"), "benchmark"], &[]);
    // --seed overrides the env.
    let d = qrem(
        &["--config", &config, "--out", &out_dir("d"), "--seed", "5", "benchmark"],
        &[("QREM_SEED", "99")],
    );
    for out in [&a, &b, &c, &d] {
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |name: &str| std::fs::read(dir.path().join(name).join("report.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert_eq!(read("c"), read("d"));
}

#[test]
fn file_flow_gen_train_mitigate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("flow");
    let out_str = out.to_str().unwrap();

    let gen = qrem(&["--config", &config, "--out", out_str, "gen-data"], &[]);
    assert!(gen.status.success());
    assert!(out.join("train.jsonl").exists());
    assert!(out.join("test.jsonl").exists());

    let calibrate = qrem(&["--config", &config, "--out", out_str, "calibrate"], &[]);
    assert!(calibrate.status.success());
    assert!(out.join("response_matrix.json").exists());

    let train = qrem(
        &["--config", &config, "--out", out_str, "train", "--train",
          out.join("train.jsonl").to_str().unwrap()],
        &[],
    );
    assert!(train.status.success(), "stderr: {}", String::from_utf8_lossy(&train.stderr));
    assert!(out.join("model.json").exists());
    assert!(out.join("loss_history.csv").exists());
    let history = std::fs::read_to_string(out.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 30, "one row per epoch plus header");

    let model_path = out.join("model.json");
    let rm_path = out.join("response_matrix.json");
    let test_path = out.join("test.jsonl");
    for method_args in [
        vec!["--method", "nn", "--model", model_path.to_str().unwrap()],
        vec!["--method", "li", "--rm", rm_path.to_str().unwrap()],
    ] {
        let mut args = vec![
            "--config", &config, "--out", out_str, "mitigate", "--data",
            test_path.to_str().unwrap(),
        ];
        args.extend(method_args.iter().copied());
        let mitigate = qrem(&args, &[]);
        assert!(mitigate.status.success(), "stderr: {}", String::from_utf8_lossy(&mitigate.stderr));
        assert!(out.join("mitigated.json").exists());

        let evaluate = qrem(
            &["--config", &config, "--out", out_str, "evaluate", "--data",
              test_path.to_str().unwrap(), "--mitigated",
              out.join("mitigated.json").to_str().unwrap()],
            &[],
        );
        assert!(evaluate.status.success());
        let csv = std::fs::read_to_string(out.join("evaluation.csv")).unwrap();
        assert!(csv.starts_with("n,method,metric,mean,stderr"));
        assert_eq!(csv.lines().count(), 1 + 6, "unmitigated and mitigated rows");
    }
}

#[test]
fn counts_ingestion_via_gen_data() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{
  "n": 2,
  "channel": {"kind": "linear", "n": 2, "flip_rates": [[0.0, 0.0], [0.0, 0.0]]},
  "train_size": 10,
  "test_size": 5,
  "shots": 128,
  "nn": {"hidden_layers": 1, "hidden_width": 20, "epochs": 10, "learning_rate": 0.001},
  "li_shots": 128,
  "seed": 1,
  "mode": "standard"
}"#,
    )
    .unwrap();
    let counts_path = dir.path().join("counts.json");
    std::fs::write(
        &counts_path,
        r#"{"n": 2, "experiments": [
            {"angles": [0.0, 0.0], "counts": {"00": 100, "10": 28}, "shots": 128}
        ]}"#,
    )
    .unwrap();
    let out = dir.path().join("ingest");
    let result = qrem(
        &["--config", config_path.to_str().unwrap(), "--out", out.to_str().unwrap(),
          "gen-data", "--from-counts", counts_path.to_str().unwrap()],
        &[],
    );
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    assert!(out.join("ingested.jsonl").exists());

    let reversed = qrem(
        &["--config", config_path.to_str().unwrap(), "--out", out.to_str().unwrap(),
          "gen-data", "--from-counts", counts_path.to_str().unwrap(), "--reverse-bits"],
        &[],
    );
    assert!(reversed.status.success());
}

#[test]
fn benchmark_preset_runs_end_to_end() {
    // Tiny sanity pass over the preset path with an overridden seed; the
    // heavy preset runs live in the acceptance suite.
    let dir = tempfile::tempdir().unwrap();
    let out = qrem(
        &["--out", dir.path().to_str().unwrap(), "--seed", "1", "benchmark",
          "--preset", "paper-a-n2"],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("\"improvement_ratios\""));
    assert!(dir.path().join("report.timings.json").exists());
}
