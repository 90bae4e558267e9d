//! The command-line front end, driven in-process.

use std::fs;
use std::path::Path;

use clap::Parser;
use srlf::cli::{self, Cli};

fn invoke(args: &[&str]) -> (i32, String, String) {
    let cli = Cli::try_parse_from(std::iter::once("srlf").chain(args.iter().copied())).expect("arguments parse");
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(&cli, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn synth(dir: &Path, threads: usize, noise: f64) {
    let (code, out, err) = invoke(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--threads",
        &threads.to_string(),
        "--noise",
        &noise.to_string(),
        "--seed",
        "3",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains(&format!("wrote {threads} threads")));
}

const SMALL: &[&str] = &[
    "--set",
    "preset=tiny",
    "--set",
    "d=12",
    "--set",
    "d_w=12",
    "--set",
    "lstm_hidden=6",
    "--set",
    "max_len=12",
    "--set",
    "max_comments=8",
    "--set",
    "epochs=2",
    "--set",
    "batch_size=8",
];

fn train_small(data: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args = vec!["train", "--quiet", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    invoke(&args)
}

#[test]
fn synth_manifest_counts_corruption() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40, 0.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["corrupted_count"], 0);
    assert_eq!(manifest["threads"], 40);
    assert_eq!(manifest["comment_count"], 40 * 8);
    let lines = fs::read_to_string(dir.path().join("threads.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 40);
}

#[test]
fn train_eval_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("threads.jsonl");
    synth(dir.path(), 60, 0.4);
    let run = dir.path().join("run");
    let (code, out, err) = train_small(&data, &run, &[]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("best epoch"));
    for f in ["model.ckpt", "history.jsonl", "config.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }

    // eval on val reproduces the best validation row of the history.
    let history = fs::read_to_string(run.join("history.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = history.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let test_row = rows.last().unwrap();
    let best_epoch = test_row["epoch"].as_u64().unwrap();
    let best_val = rows.iter().find(|r| r["split"] == "val" && r["epoch"].as_u64() == Some(best_epoch)).unwrap();
    let ckpt = run.join("model.ckpt");
    let (code, out, _) = invoke(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", "val"]);
    assert_eq!(code, 0);
    let got: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(got["accuracy"], best_val["accuracy"]);
    assert_eq!(got["loss"], best_val["loss"]);

    let (code, out, _) = invoke(&["audit", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("clean retained") && out.contains("gap"));
    let (code, out, _) = invoke(&["audit", "--checkpoint", ckpt.to_str().unwrap(), "--sampled", "4"]);
    assert_eq!(code, 0);
    assert!(out.contains("mean P(retain)"));
}

#[test]
fn audit_of_noise_free_corpus_marks_corrupted_rate_absent() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40, 0.0);
    let run = dir.path().join("run");
    let (code, _, err) = train_small(&dir.path().join("threads.jsonl"), &run, &["--set", "epochs=1"]);
    assert_eq!(code, 0, "{err}");
    let (code, out, _) = invoke(&["audit", "--checkpoint", run.join("model.ckpt").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("corrupted retained 0/0 (n/a)"), "{out}");
    assert!(out.contains("gap n/a"));
}

#[test]
fn no_policy_checkpoint_cannot_be_audited() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40, 0.4);
    let run = dir.path().join("run");
    let (code, _, _) = train_small(&dir.path().join("threads.jsonl"), &run, &["--ablation", "no_pl", "--set", "epochs=1"]);
    assert_eq!(code, 0);
    let (code, _, err) = invoke(&["audit", "--checkpoint", run.join("model.ckpt").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("no_pl"));
}

#[test]
fn missing_inputs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = invoke(&["train", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("data is required"), "{err}");

    let (code, _, err) = invoke(&["train", "--data", "/nonexistent/threads.jsonl", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1, "{err}");

    let (code, _, err) = invoke(&["train", "--data", "x", "--out", "y", "--ablation", "none"]);
    assert_eq!(code, 1);
    assert!(err.contains("ablation"), "{err}");

    let (code, _, err) = invoke(&["train", "--data", "x", "--out", "y", "--set", "gamma=1.5", "--set", "d=7"]);
    assert_eq!(code, 1);
    assert!(err.contains("gamma") && err.contains("d = 7"), "{err}");

    let (code, _, err) = invoke(&["eval", "--checkpoint", "/nonexistent/model.ckpt"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn eval_rejects_a_foreign_corpus() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40, 0.4);
    let run = dir.path().join("run");
    assert_eq!(train_small(&dir.path().join("threads.jsonl"), &run, &["--set", "epochs=1"]).0, 0);
    let other = dir.path().join("other");
    let (code, _, _) = invoke(&["synth", "--out", other.to_str().unwrap(), "--threads", "40", "--vocab", "60", "--seed", "8"]);
    assert_eq!(code, 0);
    let (code, _, err) = invoke(&[
        "eval",
        "--checkpoint",
        run.join("model.ckpt").to_str().unwrap(),
        "--data",
        other.join("threads.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("vocabulary"), "{err}");
}

#[test]
fn gradcheck_exit_codes() {
    let (code, out, _) = invoke(&["gradcheck"]);
    assert_eq!(code, 0, "{out}");
    let (code, out, _) = invoke(&["gradcheck", "--fault", "relu"]);
    assert_eq!(code, 2);
    assert!(out.contains("FAIL"), "{out}");
    let (code, _, err) = invoke(&["gradcheck", "--fault", "bogus"]);
    assert_eq!(code, 1);
    assert!(err.contains("bogus"));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 40, 0.4);
    let data = dir.path().join("threads.jsonl");
    let out_dir = dir.path().join("sweep");
    let mut args = vec![
        "sweep",
        "--param",
        "gamma",
        "--values",
        "0.1,0.9",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        "epochs=1",
    ];
    args.extend_from_slice(&SMALL[..SMALL.len() - 4]);
    let (code, out, err) = invoke(&args);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], srlf::sweep::TSV_HEADER);
    assert!(lines[1].starts_with("gamma\t0.1\t") && lines[2].starts_with("gamma\t0.9\t"));
    assert_eq!(fs::read_to_string(out_dir.join("sweep_gamma.tsv")).unwrap(), out);

    let (code, _, err) = invoke(&["sweep", "--param", "lr", "--values", "0.1", "--data", data.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("lr"));
}
