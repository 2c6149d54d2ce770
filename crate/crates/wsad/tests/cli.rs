//! End-to-end checks of the `wsad` binary: exit codes, determinism of
//! generated corpora, and the train -> score/eval round trip.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn wsad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_tiny(dir: &Path, seed: u64) {
    let out = wsad(&[
        "gen-synth",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--videos-normal",
        "4",
        "--videos-anomalous",
        "4",
        "--dim",
        "4",
        "--seg-min",
        "6",
        "--seg-max",
        "10",
        "--burst-min",
        "2",
        "--burst-max",
        "3",
        "--frames-per-seg",
        "4",
    ]);
    assert!(out.status.success(), "gen-synth failed: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(wsad(&["--help"]).status.code(), Some(0));
    assert_eq!(wsad(&["--version"]).status.code(), Some(0));
    assert_eq!(wsad(&["train", "--help"]).status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = wsad(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = wsad(&["gen-synth", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn nonpositive_lr_is_rejected_before_touching_data() {
    let out = wsad(&["train", "--data", "/nonexistent", "--out", "/tmp/x.ckpt", "--lr=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("lr must be positive"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unreadable_dataset_is_a_data_error() {
    let out = wsad(&["train", "--data", "/nonexistent", "--out", "/tmp/x.ckpt", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_synth_is_deterministic() {
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    gen_tiny(a.path(), 9);
    gen_tiny(b.path(), 9);

    let manifest_a = std::fs::read(a.path().join("manifest.tsv")).unwrap();
    let manifest_b = std::fs::read(b.path().join("manifest.tsv")).unwrap();
    assert_eq!(manifest_a, manifest_b);

    for id in ["normal_000", "anom_003"] {
        let fa = std::fs::read(a.path().join("features").join(format!("{id}.bin"))).unwrap();
        let fb = std::fs::read(b.path().join("features").join(format!("{id}.bin"))).unwrap();
        assert_eq!(fa, fb, "feature file {id} differs between identical seeds");
    }
}

#[test]
fn train_score_eval_round_trip() {
    let dir = tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    gen_tiny(&corpus, 3);
    let ckpt = dir.path().join("model.ckpt");
    let report = dir.path().join("report.jsonl");

    let out = wsad(&[
        "train",
        "--data",
        corpus.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--epochs",
        "3",
        "--hidden",
        "16",
        "--seed",
        "7",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(report_text.lines().count(), 3, "one report record per epoch");

    // per-segment scoring of a single feature file
    let scores_csv = dir.path().join("scores.csv");
    let out = wsad(&[
        "score",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--features",
        corpus.join("features").join("anom_000.bin").to_str().unwrap(),
        "--out",
        scores_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "score failed: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&scores_csv).unwrap();
    assert!(csv.starts_with("segment,score\n"));
    assert!(csv.lines().count() >= 7, "expected at least 6 segment rows");

    // evaluation against the same corpus's frame truth
    let metrics = dir.path().join("metrics.json");
    let out = wsad(&[
        "eval",
        "--data",
        corpus.to_str().unwrap(),
        "--truth",
        corpus.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(&metrics).unwrap();
    assert!(json.contains("\"frame_auc\":"), "metrics file malformed: {json}");
}

#[test]
fn eval_fails_closed_when_truth_is_missing() {
    let dir = tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    gen_tiny(&corpus, 5);
    let ckpt = dir.path().join("model.ckpt");
    let out = wsad(&[
        "train",
        "--data",
        corpus.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--epochs",
        "1",
        "--hidden",
        "8",
    ]);
    assert!(out.status.success());

    // same corpus, truth files removed: refuse to report an AUC
    std::fs::remove_dir_all(corpus.join("truth")).unwrap();
    let out = wsad(&[
        "eval",
        "--data",
        corpus.to_str().unwrap(),
        "--truth",
        corpus.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--out",
        dir.path().join("metrics.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("missing frame truth"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}
