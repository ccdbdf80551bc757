//! End-to-end tests of the `coref` binary: exit codes, JSON reports,
//! determinism, and scheme-invariance of prediction files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn coref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coref"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

/// Write a tiny gold-labeled corpus and train a small model on it.
fn make_model(dir: &Path) -> (String, String) {
    let corpus = dir.join("train.jsonl").to_str().unwrap().to_string();
    let lines: Vec<String> = (0..4)
        .map(|i| {
            serde_json::json!({
                "doc_id": format!("d{i}"),
                "text": "Ann met Bob . Ann waved while Bob smiled .",
                "clusters": [[[0, 0], [4, 4]], [[2, 2], [7, 7]]],
            })
            .to_string()
        })
        .collect();
    fs::write(&corpus, lines.join("\n") + "\n").unwrap();
    let model = dir.join("model.json").to_str().unwrap().to_string();
    let out = coref(&[
        "train",
        "--corpus",
        &corpus,
        "--phase",
        "full",
        "--model-out",
        &model,
        "--epochs",
        "2",
        "--dim",
        "8",
        "--proj-dim",
        "8",
        "--max-span-width",
        "3",
    ]);
    assert_ok(&out);
    (model, corpus)
}

#[test]
fn empty_corpus_predicts_empty_output_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = make_model(dir.path());
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let pred = dir.path().join("pred.jsonl");
    let out = coref(&[
        "predict",
        "--model",
        &model,
        "--corpus",
        empty.to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert_eq!(fs::read(&pred).unwrap(), b"");
}

#[test]
fn schemes_and_budgets_produce_byte_identical_prediction_files() {
    let dir = tempfile::tempdir().unwrap();
    let (model, corpus) = make_model(dir.path());
    let mut outputs = Vec::new();
    for (scheme, budget) in [
        ("leftover", "10000"),
        ("vanilla", "10000"),
        ("leftover", "1000"),
        ("leftover", "100000"),
    ] {
        let pred = dir.path().join(format!("pred-{scheme}-{budget}.jsonl"));
        let out = coref(&[
            "predict",
            "--model",
            &model,
            "--corpus",
            &corpus,
            "--out",
            pred.to_str().unwrap(),
            "--scheme",
            scheme,
            "--max-tokens-in-batch",
            budget,
        ]);
        assert_ok(&out);
        outputs.push(fs::read(&pred).unwrap());
    }
    for other in &outputs[1..] {
        assert_eq!(&outputs[0], other);
    }
}

#[test]
fn batch_stats_reproduces_the_padding_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("long.jsonl");
    let text = vec!["word"; 600].join(" ");
    let lines: Vec<String> = (0..10)
        .map(|i| serde_json::json!({"doc_id": format!("L{i}"), "text": text}).to_string())
        .collect();
    fs::write(&corpus, lines.join("\n") + "\n").unwrap();
    let out = coref(&[
        "batch-stats",
        "--corpus",
        corpus.to_str().unwrap(),
        "--max-length",
        "512",
        "--max-tokens-in-batch",
        "10000",
    ]);
    assert_ok(&out);
    let reports = stdout_json(&out);
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["scheme"], "vanilla");
    assert_eq!(reports[0]["padded_tokens"], 4240);
    assert_eq!(reports[1]["scheme"], "leftover");
    assert_eq!(reports[1]["padded_tokens"], 0);
    assert_eq!(reports[1]["real_tokens"], 6000);
}

#[test]
fn missing_input_exits_2_and_malformed_jsonl_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = coref(&[
        "batch-stats",
        "--corpus",
        dir.path().join("nope.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"doc_id\": \"a\", \"text\": \"hi\"}\nnot json\n").unwrap();
    let out = coref(&["batch-stats", "--corpus", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("line 2"),
        "error names the offending line"
    );
}

#[test]
fn gen_synthetic_is_deterministic_and_teacher_finds_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = coref(&[
            "gen-synthetic",
            "--out-dir",
            d.to_str().unwrap(),
            "--n-train",
            "8",
            "--n-dev",
            "3",
            "--n-test",
            "3",
            "--seed",
            "5",
        ]);
        assert_ok(&out);
    }
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }

    // every generated document yields at least one teacher cluster
    let annotated = dir.path().join("annotated.jsonl");
    let out = coref(&[
        "annotate",
        "--corpus",
        a.join("train.jsonl").to_str().unwrap(),
        "--out",
        annotated.to_str().unwrap(),
        "--teacher",
        "string-match",
    ]);
    assert_ok(&out);
    let report = stdout_json(&out);
    assert_eq!(report["annotated"], 8);
    for line in fs::read_to_string(&annotated).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(!v["clusters"].as_array().unwrap().is_empty());
    }
}

#[test]
fn gen_synthetic_with_zero_docs_writes_empty_splits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("z");
    let out = coref(&[
        "gen-synthetic",
        "--out-dir",
        d.to_str().unwrap(),
        "--n-train",
        "0",
        "--n-dev",
        "0",
        "--n-test",
        "0",
    ]);
    assert_ok(&out);
    assert_eq!(fs::read(d.join("train.jsonl")).unwrap(), b"");
}

#[test]
fn evaluate_reports_corpus_and_per_document_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (model, corpus) = make_model(dir.path());
    let pred = dir.path().join("pred.jsonl");
    let out = coref(&[
        "predict",
        "--model",
        &model,
        "--corpus",
        &corpus,
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let out = coref(&[
        "evaluate",
        "--gold",
        &corpus,
        "--pred",
        pred.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let report = stdout_json(&out);
    assert_eq!(report["per_document"].as_array().unwrap().len(), 4);
    let avg = report["corpus"]["avg_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&avg));
    for key in ["muc", "b3", "ceaf_phi4"] {
        assert!(report["corpus"][key]["f1"].is_number());
    }
}

#[test]
fn distill_and_transitivity_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_ok(&coref(&[
        "gen-synthetic",
        "--out-dir",
        data.to_str().unwrap(),
        "--n-train",
        "12",
        "--n-dev",
        "4",
        "--n-test",
        "0",
        "--seed",
        "11",
    ]));
    let model = dir.path().join("distilled.json");
    let out = coref(&[
        "distill",
        "--unlabeled",
        data.join("train.jsonl").to_str().unwrap(),
        "--dev",
        data.join("dev.jsonl").to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
        "--mention-epochs",
        "2",
        "--full-epochs",
        "2",
        "--finetune-epochs",
        "0",
        "--dim",
        "8",
        "--proj-dim",
        "8",
        "--max-span-width",
        "3",
        "--lambda",
        "0.4",
    ]);
    assert_ok(&out);
    let report = stdout_json(&out);
    assert_eq!(report["annotated_docs"], 12);
    assert!(report["dev_eval"]["avg_f1"].is_number());

    let out = coref(&[
        "analyze-transitivity",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        data.join("dev.jsonl").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let report = stdout_json(&out);
    assert!(report["negative_fraction"].is_number());
    assert!(report["within_cluster_pairs"].is_number());
}

#[test]
fn training_is_idempotent_given_identical_inputs_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (model_a, corpus) = make_model(dir.path());
    let dir_b = tempfile::tempdir().unwrap();
    let (model_b, _) = make_model(dir_b.path());
    assert_eq!(fs::read(&model_a).unwrap(), fs::read(&model_b).unwrap());
    drop(corpus);
}
