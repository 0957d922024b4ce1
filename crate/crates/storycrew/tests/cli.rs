//! End-to-end tests of the command-line interface, driven through the
//! compiled binary against the built-in mock backends.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn storycrew() -> Command {
    Command::new(env!("CARGO_BIN_EXE_storycrew"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    storycrew()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_prompts(dir: &Path) -> PathBuf {
    let path = dir.join("prompts.jsonl");
    std::fs::write(
        &path,
        concat!(
            r#"{"id":"t1","prompt":"Write a story about a lighthouse keeper and the storm season."}"#,
            "\n",
            r#"{"id":"t2","prompt":"Write a story about a clockmaker who loses track of time."}"#,
            "\n"
        ),
    )
    .unwrap();
    path
}

fn write_dataset(dir: &Path) -> PathBuf {
    let path = dir.join("dataset.jsonl");
    let mut lines = String::new();
    for (i, split) in [(0, "train"), (1, "train"), (2, "valid"), (3, "test"), (4, "test")] {
        let story = format!(
            "The keeper number {i} climbed the stairs. He trimmed the wick with care. \
             The storm arrived before midnight. Waves beat the tower for hours. \
             By morning the light still burned. The village slept safely below."
        );
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "id": format!("ex{i}"),
                "prompt": format!("Write a story about lighthouse keeper {i} facing a storm."),
                "story": story,
                "split": split,
            })
        ));
    }
    std::fs::write(&path, lines).unwrap();
    path
}

#[test]
fn generate_writes_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = write_prompts(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "generate",
            "--variant",
            "plan-write",
            "--prompts",
            prompts.to_str().unwrap(),
            "--backend",
            "mock-scripted",
            "--out",
            "runs",
        ],
    );
    assert_success(&out);
    for id in ["t1", "t2"] {
        let base = dir.path().join("runs").join(id).join("plan-write");
        let story = std::fs::read_to_string(base.join("story.txt")).unwrap();
        assert!(story.starts_with("out:EXPOSITION"));
        let trace = std::fs::read_to_string(base.join("trace.jsonl")).unwrap();
        assert_eq!(trace.lines().count(), 9);
        assert!(base.join("scratchpad.txt").is_file());
    }
}

#[test]
fn generate_rejects_unknown_variant_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["generate", "--variant", "plan+write2", "--prompts", "p.jsonl", "--out", "runs"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan+write2"));
}

#[test]
fn generate_reports_runtime_errors_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "generate",
            "--variant",
            "e2e",
            "--prompts",
            "does-not-exist.jsonl",
            "--out",
            "runs",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_runs_persist_their_partial_trace() {
    // Echoing a writing-agent prompt reflects the scratchpad headers back,
    // which the scratchpad rejects; the run fails but leaves its files.
    let dir = tempfile::tempdir().unwrap();
    let prompts = write_prompts(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "generate", "--variant", "write", "--prompts", prompts.to_str().unwrap(),
            "--backend", "mock-echo", "--out", "runs",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let base = dir.path().join("runs/t1/write");
    assert!(base.join("error.txt").is_file());
    assert!(base.join("trace.jsonl").is_file());
    assert!(base.join("story.txt").is_file());
}

#[test]
fn stats_reports_split_counts() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path());
    let out = run_in(dir.path(), &["stats", "--dataset", dataset.to_str().unwrap()]);
    assert_success(&out);
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stats.json")).unwrap())
            .unwrap();
    assert_eq!(stats["per_split"]["train"]["count"], 2);
    assert_eq!(stats["per_split"]["test"]["count"], 2);
    assert_eq!(stats["overall"]["count"], 5);
}

#[test]
fn metrics_scores_human_split() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "metrics",
            "--human",
            "test",
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            "human.json",
        ],
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("human.json")).unwrap())
            .unwrap();
    assert_eq!(report["system"], "human");
    assert_eq!(report["per_story"].as_array().unwrap().len(), 2);
    assert!(report["means"]["words"].as_f64().unwrap() > 0.0);
    assert!(report["inter_rep"].as_f64().is_some());
}

#[test]
fn judge_then_rank_over_mock_runs() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = write_prompts(dir.path());
    for (variant, backend, out_dir) in [
        ("plan-write", "mock-scripted", "runs-scripted"),
        ("e2e", "mock-echo", "runs-echo"),
    ] {
        let out = run_in(
            dir.path(),
            &[
                "generate", "--variant", variant, "--prompts", prompts.to_str().unwrap(),
                "--backend", backend, "--out", out_dir,
            ],
        );
        assert_success(&out);
    }
    let out = run_in(
        dir.path(),
        &[
            "judge",
            "--runs",
            "runs-scripted,runs-echo",
            "--judge",
            "mock-judge",
            "--seed",
            "5",
            "--out",
            "verdicts.jsonl",
        ],
    );
    assert_success(&out);
    let verdicts = std::fs::read_to_string(dir.path().join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 2); // 2 prompts x 1 pair

    let out = run_in(
        dir.path(),
        &[
            "rank",
            "--verdicts",
            "verdicts.jsonl",
            "--dimension",
            "overall",
            "--tie-policy",
            "half",
        ],
    );
    assert_success(&out);
    let strengths: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("strengths.json")).unwrap())
            .unwrap();
    let systems = strengths["strengths"]["systems"].as_array().unwrap();
    assert_eq!(systems.len(), 2);
    // The echo system returns the whole prompt, so the longer-story judge
    // prefers it on every pair.
    let top = String::from_utf8_lossy(&out.stdout);
    let first_row = top.lines().find(|l| l.starts_with("1 ")).unwrap();
    assert!(first_row.contains("runs-echo"), "{top}");
}

#[test]
fn rank_matches_two_player_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    // 30 wins for s1, 10 for s2, presentation varied.
    let mut lines = String::new();
    for i in 0..40 {
        let s1_wins = i < 30;
        let i_first = i % 2 == 0;
        let choice = if s1_wins == i_first { "A" } else { "B" };
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "task": {
                    "prompt_id": format!("p{i}"),
                    "system_i": "s1",
                    "system_j": "s2",
                    "i_is_story_a": i_first,
                    "seed": 0,
                },
                "verdict": {
                    "plot": choice, "creativity": choice, "development": choice,
                    "language_use": choice, "overall": choice,
                },
            })
        ));
    }
    std::fs::write(dir.path().join("verdicts.jsonl"), lines).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "rank", "--verdicts", "verdicts.jsonl", "--dimension", "overall",
            "--tie-policy", "half", "--epsilon", "0",
        ],
    );
    assert_success(&out);
    let strengths: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("strengths.json")).unwrap())
            .unwrap();
    let systems = strengths["strengths"]["systems"].as_array().unwrap();
    let values = strengths["strengths"]["strengths"].as_array().unwrap();
    let s1 = systems.iter().position(|s| s == "s1").unwrap();
    assert!((values[s1].as_f64().unwrap() - 0.75).abs() < 1e-6);
    assert!((values[1 - s1].as_f64().unwrap() - 0.25).abs() < 1e-6);
}

#[test]
fn synth_emits_training_files_with_mock_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "synth",
            "--dataset",
            dataset.to_str().unwrap(),
            "--teacher",
            "mock-teacher",
            "--out",
            "synth",
            "--split",
            "train",
        ],
    );
    assert_success(&out);
    for agent in ["conflict", "character", "setting", "plot", "exposition", "rising_action", "climax", "falling_action", "resolution"] {
        let path = dir.path().join("synth").join(format!("{agent}.jsonl"));
        let content = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {agent}.jsonl"));
        assert_eq!(content.lines().count(), 2, "{agent}: one record per train example");
    }
    assert!(!dir.path().join("synth/rejects.jsonl").exists());
}

#[test]
fn subcommands_do_not_mutate_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path());
    let before = std::fs::read_to_string(&dataset).unwrap();
    assert_success(&run_in(dir.path(), &["stats", "--dataset", dataset.to_str().unwrap()]));
    assert_success(&run_in(
        dir.path(),
        &["metrics", "--human", "train", "--dataset", dataset.to_str().unwrap()],
    ));
    assert_eq!(std::fs::read_to_string(&dataset).unwrap(), before);
}

#[test]
fn generate_is_reproducible_for_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = write_prompts(dir.path());
    for out_dir in ["first", "second"] {
        assert_success(&run_in(
            dir.path(),
            &[
                "generate", "--variant", "write", "--prompts", prompts.to_str().unwrap(),
                "--backend", "mock-scripted", "--out", out_dir, "--seed", "9",
            ],
        ));
    }
    for file in ["t1/write/trace.jsonl", "t1/write/story.txt", "t2/write/scratchpad.txt"] {
        let a = std::fs::read_to_string(dir.path().join("first").join(file)).unwrap();
        let b = std::fs::read_to_string(dir.path().join("second").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}
