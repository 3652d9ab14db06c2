//! End-to-end runs of the select/sweep/report pipeline through the binary,
//! all on the synthetic backend (no network, no credentials).

use std::path::Path;
use std::process::{Command, Output};

fn frs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_frs"))
}

fn run(args: &[&str]) -> Output {
    frs().args(args).output().expect("binary runs")
}

fn assert_success(output: &Output) -> String {
    let stdout = String::from_utf8_lossy(&output.stdout).to_string();
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{stdout}\nstderr:\n{stderr}"
    );
    stdout
}

fn write_config(dir: &Path, out_dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.json");
    let config = serde_json::json!({
        "backend": {"type": "synthetic", "correct_token_prob": 0.5547},
        "output_dir": out_dir,
        "sweep": {"trials_per_temperature": 200, "run_seed": 5, "concurrency_limit": 2},
        "d_values": [1, 2, 5, 10, 50],
        "target_count": 6
    });
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn full_synthetic_pipeline_via_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), &out);
    let config = config.to_str().unwrap();

    // select
    let stdout = assert_success(&run(&["select", "--config", config]));
    assert!(stdout.contains("selected 6 of 6"), "stdout: {stdout}");
    assert!(out.join("selected.jsonl").exists());

    // select again: idempotent no-op
    let stdout = assert_success(&run(&["select", "--config", config]));
    assert!(stdout.contains("nothing to do"), "stdout: {stdout}");

    // sweep
    let stdout = assert_success(&run(&["sweep", "--config", config, "--mode", "linear"]));
    assert!(stdout.contains("swept 6 samples"), "stdout: {stdout}");
    assert!(stdout.contains("mean FRS at d=1"), "stdout: {stdout}");
    assert!(out.join("runstate.jsonl").exists());

    // sweeping again without --resume is refused
    let output = run(&["sweep", "--config", config, "--mode", "linear"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--resume"), "stderr: {stderr}");

    // resuming restores everything without new work
    let stdout = assert_success(&run(&[
        "sweep", "--config", config, "--mode", "linear", "--resume",
    ]));
    assert!(stdout.contains("6 restored from run state"), "stdout: {stdout}");

    // report with audit
    let stdout = assert_success(&run(&["report", "--config", config, "--audit"]));
    assert!(stdout.contains("report for 6 samples"), "stdout: {stdout}");
    assert!(stdout.contains("audit: emitted aggregates match"), "stdout: {stdout}");
    let report_dir = out.join("report");
    for file in [
        "per_sample.tsv",
        "curve_points.tsv",
        "frs_by_d.tsv",
        "accuracy_by_temperature.tsv",
        "certainty_bins.tsv",
        "summary.json",
    ] {
        assert!(report_dir.join(file).exists(), "missing {file}");
    }

    // the config hash is stamped into every artifact of the run
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("summary.json")).unwrap())
            .unwrap();
    let hash = summary["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 16);
    for artifact in ["selected.jsonl", "runstate.jsonl"] {
        let first_line = std::fs::read_to_string(out.join(artifact))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert!(
            first_line.contains(hash),
            "{artifact} meta line missing config hash {hash}: {first_line}"
        );
    }

    // report is deterministic: emitting again leaves identical bytes
    let before = std::fs::read(report_dir.join("per_sample.tsv")).unwrap();
    assert_success(&run(&["report", "--config", config]));
    let after = std::fs::read(report_dir.join("per_sample.tsv")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn binary_mode_pipeline_works() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), &out);
    let config = config.to_str().unwrap();

    assert_success(&run(&["select", "--config", config]));
    let stdout = assert_success(&run(&["sweep", "--config", config, "--mode", "binary"]));
    assert!(stdout.contains("binary mode"), "stdout: {stdout}");
    let stdout = assert_success(&run(&["report", "--config", config, "--audit"]));
    assert!(stdout.contains("report for 6 samples"), "stdout: {stdout}");
}

#[test]
fn missing_dataset_path_fails_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    let config = serde_json::json!({
        "backend": {"type": "replay", "trace_store": dir.path().join("nope.jsonl")},
        "dataset": {"path": dir.path().join("missing.jsonl"), "format": "custom"},
        "output_dir": dir.path().join("run")
    });
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let output = run(&["select", "--config", config_path.to_str().unwrap()]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn seed_override_changes_config_hash_and_isolates_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), &out);
    let config = config.to_str().unwrap();

    assert_success(&run(&["select", "--config", config]));
    // a different seed is a different effective config; stages refuse to mix
    let output = run(&["sweep", "--config", config, "--seed", "99"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("config"), "stderr: {stderr}");
}

#[test]
fn zero_selected_samples_is_a_clean_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config_path = dir.path().join("run.json");
    // correct token below uniform chance: argmax at t=0 is wrong, nothing selects
    let config = serde_json::json!({
        "backend": {"type": "synthetic", "correct_token_prob": 0.05},
        "output_dir": out,
        "sweep": {"trials_per_temperature": 20, "run_seed": 5},
        "target_count": 4
    });
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let config = config_path.to_str().unwrap();

    let stdout = assert_success(&run(&["select", "--config", config]));
    assert!(stdout.contains("selected 0 of 4"), "stdout: {stdout}");
    assert!(stdout.contains("warning"), "stdout: {stdout}");
    let stdout = assert_success(&run(&["sweep", "--config", config]));
    assert!(stdout.contains("nothing to sweep"), "stdout: {stdout}");
}

#[test]
fn replay_backend_pipeline_with_missing_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");

    // two recorded questions, both greedy-correct
    let traces = concat!(
        r#"{"question_id": "q1", "gold": "paris", "positions": [[{"token": "par", "logprob": -0.2}, {"token": "lon", "logprob": -2.0}], [{"token": "is", "logprob": -0.1}, {"token": "donia", "logprob": -2.5}]]}"#,
        "\n",
        r#"{"question_id": "q2", "gold": "1931", "positions": [[{"token": "1931", "logprob": -0.3}, {"token": "1932", "logprob": -1.5}, {"token": "1930", "logprob": -2.2}]]}"#,
        "\n",
    );
    let trace_path = dir.path().join("traces.jsonl");
    std::fs::write(&trace_path, traces).unwrap();

    let questions = concat!(
        r#"{"question_id": "q1", "question": "Capital of France?", "gold_answers": ["Paris"]}"#,
        "\n",
        r#"{"question_id": "q2", "question": "Dracula film year?", "gold_answers": ["1931"]}"#,
        "\n",
    );
    let data_path = dir.path().join("questions.jsonl");
    std::fs::write(&data_path, questions).unwrap();

    let config_path = dir.path().join("run.json");
    let config = serde_json::json!({
        "backend": {"type": "replay", "trace_store": trace_path},
        "dataset": {"path": data_path, "format": "custom"},
        "output_dir": out,
        "sweep": {"trials_per_temperature": 50, "run_seed": 3},
        "target_count": 2,
        "labels_path": dir.path().join("labels-does-not-exist.jsonl")
    });
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let config = config_path.to_str().unwrap();

    let stdout = assert_success(&run(&["select", "--config", config]));
    assert!(stdout.contains("selected 2 of 2"), "stdout: {stdout}");
    assert_success(&run(&["sweep", "--config", config]));
    let stdout = assert_success(&run(&["report", "--config", config, "--audit"]));
    // the configured label file is absent: the type table is omitted with a notice
    assert!(stdout.contains("notice: label file"), "stdout: {stdout}");
    assert!(!out.join("report/question_type_proportions.tsv").exists());
    assert!(out.join("report/per_sample.tsv").exists());
}

#[test]
fn every_report_file_carries_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), &out);
    let config = config.to_str().unwrap();
    assert_success(&run(&["select", "--config", config]));
    assert_success(&run(&["sweep", "--config", config]));
    assert_success(&run(&["report", "--config", config]));

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("report/summary.json")).unwrap(),
    )
    .unwrap();
    let hash = summary["config_hash"].as_str().unwrap();
    for file in [
        "per_sample.tsv",
        "curve_points.tsv",
        "frs_by_d.tsv",
        "accuracy_by_temperature.tsv",
        "certainty_bins.tsv",
    ] {
        let first = std::fs::read_to_string(out.join("report").join(file))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(first, format!("# config {hash}"), "{file}");
    }
}
