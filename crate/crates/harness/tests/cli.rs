//! Drives the `regnn` binary end to end on a miniature config.

use std::path::Path;
use std::process::{Command, Output};

fn write_config(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"
[experiment]
scenario = "dynamic-size"
seed = 9
output_dir = "{}"

[network]
size_min = 3
size_max = 6

[data]
meta_tasks = 3
train_slots = 8
test_slots = 6
eval_slots = 6

[fomaml]
outer_steps = 2
meta_batch = 3

[reptile]
outer_steps = 2
meta_batch = 3

[joint]
steps = 4
batch = 8

[sweep]
repetitions = 2
samples = [2, 4]
radii = [1.0, 8.0]
radius_samples = 3
"#,
        out.display()
    );
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn regnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regnn"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn pipeline_verbs_produce_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    stdout_of(&regnn(&["gen-data", "--config", cfg]));
    assert!(out.join("dataset/index.txt").exists());
    assert!(out.join("dataset/task-000.drop.txt").exists());
    assert!(out.join("dataset/test-task.episode.bin").exists());

    stdout_of(&regnn(&["meta-train", "--config", cfg, "--algorithm", "fomaml"]));
    stdout_of(&regnn(&["meta-train", "--config", cfg, "--algorithm", "reptile"]));
    let ckpt = out.join("fomaml.ckpt");
    assert!(ckpt.exists());
    assert!(out.join("fomaml-train.csv").exists());
    let first = std::fs::read(&ckpt).unwrap();
    stdout_of(&regnn(&["meta-train", "--config", cfg, "--algorithm", "fomaml"]));
    assert_eq!(first, std::fs::read(&ckpt).unwrap(), "retraining must be deterministic");

    let ckpt = ckpt.to_str().unwrap().to_owned();
    let adapt = stdout_of(&regnn(&[
        "adapt", "--config", cfg, "--ckpt", &ckpt, "--samples", "3",
    ]));
    assert!(adapt.contains("sum_rate_bits="));
    assert!(out.join("adapted.ckpt").exists());
    let eval = stdout_of(&regnn(&["eval", "--config", cfg, "--ckpt", &ckpt]));
    assert!(eval.contains("sum_rate_bits="));
    assert_ne!(adapt.lines().next(), eval.lines().next());
}

#[test]
fn sweep_then_report_round_trips_and_manifest_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    let report = stdout_of(&regnn(&["sweep-samples", "--config", cfg]));
    assert!(report.contains("mean_sum_rate_bits"));
    let results = out.join("samples-results.csv");
    let manifest = out.join("samples-manifest.toml");
    let first = std::fs::read(&results).unwrap();

    // The manifest alone reproduces the CSV byte for byte.
    stdout_of(&regnn(&["sweep-samples", "--config", manifest.to_str().unwrap()]));
    assert_eq!(first, std::fs::read(&results).unwrap());

    let report_path = dir.path().join("report.csv");
    let text = stdout_of(&regnn(&[
        "report",
        "--input",
        results.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]));
    assert!(text.starts_with("method,x_kind,x_value,runs,"));
    assert!(report_path.exists());
}

#[test]
fn failures_exit_with_the_configuration_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();

    let out = regnn(&["meta-train", "--config", cfg, "--algorithm", "newton"]);
    assert_eq!(out.status.code(), Some(1));
    let out = regnn(&["eval", "--config", "/nonexistent.toml", "--ckpt", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let out = regnn(&["report", "--input", "/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let out = regnn(&["sweep-radius", "--config", cfg]);
    assert_eq!(out.status.code(), Some(1));
    let out = regnn(&["no-such-verb"]);
    assert_eq!(out.status.code(), Some(1));
    let out = regnn(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}
