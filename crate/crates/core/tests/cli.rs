use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use revex::corpus::{Label, TrainingCorpus};
use revex::eval::PredictionsFile;
use revex::svm::LinearModel;

fn revex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revex"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const FILLER: &[&str] = &[
    "The study was approved by the ethics board.",
    "Echocardiography was performed at baseline.",
    "Follow up lasted two years.",
    "Statistical analysis used mixed models.",
];

/// Three reviews, one reference each, with the review value planted
/// verbatim as sentence 2.
fn fixture(dir: &Path) {
    let values = [
        "Adults with chronic heart failure and reduced ejection fraction.",
        "Postmenopausal women older than 40 years without diabetes.",
        "Patients hospitalised for acute decompensation in NYHA class III.",
    ];
    let mut records = Vec::new();
    std::fs::create_dir_all(dir.join("articles")).unwrap();
    for (i, v) in values.iter().enumerate() {
        let id = format!("ref{i}");
        records.push(serde_json::json!({
            "review_id": format!("rev{i}"),
            "reference_id": id,
            "element_kind": "inclusion_criteria",
            "value_text": v,
        }));
        let text = format!("{} {} {} {} {}", FILLER[0], FILLER[1], v, FILLER[2], FILLER[3]);
        std::fs::write(dir.join("articles").join(format!("{id}.txt")), text).unwrap();
    }
    std::fs::write(dir.join("reviews.json"), serde_json::to_string(&records).unwrap()).unwrap();
}

#[test]
fn planted_value_sentences_become_positives() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = revex(
        dir.path(),
        &["build-corpus", "--reviews", "reviews.json", "--articles", "articles", "--out", "corpus.json"],
    );
    let stdout = ok(&out);
    assert!(stdout.lines().next().unwrap().contains("alpha=0.2 beta=0.005"), "{stdout}");
    let corpus = TrainingCorpus::read(&dir.path().join("corpus.json")).unwrap();
    let positives: BTreeSet<(String, usize)> = corpus
        .positives
        .iter()
        .map(|p| (p.reference_id.clone(), p.sentence.index))
        .collect();
    let expected: BTreeSet<(String, usize)> = (0..3).map(|i| (format!("ref{i}"), 2)).collect();
    assert_eq!(positives, expected);
    assert!(corpus.positives.iter().all(|p| p.source_score == 1.0));
}

#[test]
fn missing_reference_is_a_data_error_naming_the_id() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    std::fs::remove_file(dir.path().join("articles/ref1.txt")).unwrap();
    let out = revex(
        dir.path(),
        &["build-corpus", "--reviews", "reviews.json", "--articles", "articles", "--out", "c.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ref1"), "{}", stderr(&out));
    assert!(!dir.path().join("c.json").exists());
}

#[test]
fn malformed_records_are_identified() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    std::fs::write(
        dir.path().join("bad.json"),
        r#"[{"review_id":"a","reference_id":"ref0","element_kind":"inclusion_criteria","value_text":"x"},{"review_id":"b"}]"#,
    )
    .unwrap();
    let out = revex(
        dir.path(),
        &["build-corpus", "--reviews", "bad.json", "--articles", "articles", "--out", "c.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("record 1"), "{}", stderr(&out));

    std::fs::write(dir.path().join("broken.json"), "[{").unwrap();
    let out = revex(
        dir.path(),
        &["build-corpus", "--reviews", "broken.json", "--articles", "articles", "--out", "c.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("broken.json"));

    std::fs::write(
        dir.path().join("empty.json"),
        r#"[{"review_id":"a","reference_id":"ref0","element_kind":"inclusion_criteria","value_text":" -- "}]"#,
    )
    .unwrap();
    let out = revex(
        dir.path(),
        &["build-corpus", "--reviews", "empty.json", "--articles", "articles", "--out", "c.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ref0"), "{}", stderr(&out));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(revex(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(revex(dir.path(), &["train", "--c", "1", "--grid"]).status.code(), Some(1));
    assert_eq!(revex(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(revex(dir.path(), &["build-corpus"]).status.code(), Some(1));
    std::fs::write(dir.path().join("x.toml"), "alhpa = 1\n").unwrap();
    assert_eq!(
        revex(dir.path(), &["--config", "x.toml", "synth", "--out", "s"]).status.code(),
        Some(1)
    );
    assert_eq!(
        revex(dir.path(), &["--alpha", "1.5", "build-corpus", "--reviews", "r", "--articles", "a", "--out", "o"])
            .status
            .code(),
        Some(1)
    );
}

fn small_synth(dir: &Path, seed: &str) {
    ok(&revex(
        dir,
        &[
            "--seed", seed, "synth", "--out", "s", "--n-reviews", "8", "--refs-per-review", "2",
            "--sentences-per-article", "20", "--test-articles", "3",
        ],
    ));
    ok(&revex(
        dir,
        &[
            "--seed", seed, "build-corpus", "--reviews", "s/reviews.json", "--articles", "s/articles",
            "--out", "corpus.json",
        ],
    ));
}

#[test]
fn fixed_c_fits_a_separable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), "5");
    ok(&revex(dir.path(), &["train", "--corpus", "corpus.json", "--c", "1.0", "--out", "model.json"]));
    let model = LinearModel::read(&dir.path().join("model.json")).unwrap();
    assert_eq!(model.c, 1.0);
    assert!(model.report.as_ref().unwrap().converged);
    let corpus = TrainingCorpus::read(&dir.path().join("corpus.json")).unwrap();
    let errors = corpus
        .instances()
        .iter()
        .filter(|i| model.predict(&i.sentence).0 != i.label)
        .count();
    assert_eq!(errors, 0);
}

#[test]
fn grid_training_is_reproducible_and_records_its_trace() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        small_synth(dir, "9");
        ok(&revex(
            dir,
            &["--seed", "9", "--metric", "accuracy", "train", "--corpus", "corpus.json", "--grid", "--out", "model.json"],
        ));
    }
    for f in ["corpus.json", "model.json", "model.trace.jsonl"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let model = LinearModel::read(&a.path().join("model.json")).unwrap();
    assert_eq!(model.trace_path.as_deref(), Some("model.trace.jsonl"));
    let trace = std::fs::read_to_string(a.path().join("model.trace.jsonl")).unwrap();
    let entries: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let best = entries.iter().map(|e| e["mean"].as_f64().unwrap()).fold(f64::MIN, f64::max);
    let chosen = entries
        .iter()
        .find(|e| e["C"].as_f64().unwrap() == model.c)
        .expect("chosen C is in the trace");
    assert_eq!(chosen["mean"].as_f64().unwrap(), best);
    for key in ["stage", "C", "fold_metrics", "mean"] {
        assert!(chosen.get(key).is_some(), "trace entry lacks {key}");
    }
}

#[test]
fn extract_and_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_synth(d, "4");
    ok(&revex(d, &["train", "--corpus", "corpus.json", "--c", "1", "--out", "model.json"]));

    // a training positive surrounded by noise sentences comes out on top
    let corpus = TrainingCorpus::read(&d.join("corpus.json")).unwrap();
    let planted = &corpus.positives[0].sentence.text;
    let noise: Vec<&str> = corpus.negatives.iter().take(5).map(|n| n.sentence.text.as_str()).collect();
    std::fs::create_dir_all(d.join("new")).unwrap();
    std::fs::write(
        d.join("new/probe.txt"),
        format!("{} {} {planted} {} {}", noise[0], noise[1], noise[2], noise[3]),
    )
    .unwrap();
    let listing = ok(&revex(d, &["extract", "--model", "model.json", "--out", "probe.json", "new"]));
    assert!(listing.starts_with("probe"));
    let preds: PredictionsFile =
        serde_json::from_str(&std::fs::read_to_string(d.join("probe.json")).unwrap()).unwrap();
    assert_eq!(preds.articles[0].candidates[0].index, 2);

    ok(&revex(d, &["extract", "--model", "model.json", "--out", "preds.json", "s/heldout"]));
    let table = ok(&revex(
        d,
        &["evaluate", "--predictions", "preds.json", "--gold", "s/heldout_gold.json", "--out", "report.json"],
    ));
    assert!(table.starts_with("Article Id"));
    assert!(d.join("report.txt").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["articles"].as_array().unwrap().len(), 3);
}

fn write_predictions(path: &Path, articles: &[(&str, &[usize])]) {
    let articles: Vec<serde_json::Value> = articles
        .iter()
        .map(|(id, idx)| {
            serde_json::json!({
                "article_id": id,
                "candidates": idx.iter().map(|i| serde_json::json!({"index": i, "margin": 1.0, "text": ""})).collect::<Vec<_>>(),
            })
        })
        .collect();
    let file = serde_json::json!({"schema_version": 1, "seed": 0, "articles": articles});
    std::fs::write(path, file.to_string()).unwrap();
}

#[test]
fn evaluate_exact_and_disjoint_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("gold.json"), r#"{"schema_version": 1, "a": [1, 4], "b": [0]}"#).unwrap();

    write_predictions(&d.join("same.json"), &[("a", &[1, 4]), ("b", &[0])]);
    ok(&revex(d, &["evaluate", "--predictions", "same.json", "--gold", "gold.json", "--out", "r1.json"]));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r1.json")).unwrap()).unwrap();
    for k in ["macro_recall", "macro_precision", "micro_recall", "micro_precision"] {
        assert_eq!(r["aggregate"][k], 1.0, "{k}");
    }

    write_predictions(&d.join("off.json"), &[("a", &[2]), ("b", &[3])]);
    ok(&revex(d, &["evaluate", "--predictions", "off.json", "--gold", "gold.json", "--out", "r2.json"]));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r2.json")).unwrap()).unwrap();
    assert_eq!(r["aggregate"]["macro_recall"], 0.0);
    assert_eq!(r["aggregate"]["macro_precision"], 0.0);

    write_predictions(&d.join("stray.json"), &[("zzz", &[0])]);
    let out = revex(d, &["evaluate", "--predictions", "stray.json", "--gold", "gold.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("zzz"));
}

#[test]
fn extract_skips_unreadable_files_and_accepts_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_synth(d, "2");
    ok(&revex(d, &["train", "--corpus", "corpus.json", "--c", "1", "--out", "model.json"]));
    std::fs::create_dir_all(d.join("empty")).unwrap();
    ok(&revex(d, &["extract", "--model", "model.json", "--out", "e.json", "empty"]));
    let preds: PredictionsFile =
        serde_json::from_str(&std::fs::read_to_string(d.join("e.json")).unwrap()).unwrap();
    assert!(preds.articles.is_empty());

    std::fs::write(d.join("bad.txt"), [0xff, 0xfe, 0x00]).unwrap();
    let out = revex(d, &["extract", "--model", "model.json", "bad.txt", "s/heldout/test001.txt"]);
    ok(&out);
    assert!(stderr(&out).contains("bad.txt"));
    let out = revex(d, &["extract", "--model", "model.json", "bad.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (out, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        ok(&revex(d, &["--seed", seed, "synth", "--out", out, "--n-reviews", "2", "--test-articles", "1"]));
    }
    let files = ["reviews.json", "gold.json", "heldout_gold.json", "articles/review001_ref1.txt", "heldout/test001.txt"];
    for f in files {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
    assert_ne!(
        std::fs::read(d.join("a/articles/review001_ref1.txt")).unwrap(),
        std::fs::read(d.join("c/articles/review001_ref1.txt")).unwrap()
    );
}

#[test]
fn annotate_numbers_sentences() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "First one here. Second\none here.").unwrap();
    let out = ok(&revex(dir.path(), &["annotate", "a.txt"]));
    assert_eq!(out, "   0  First one here.\n   1  Second one here.\n");
}

#[test]
fn config_file_supplies_paths_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture(d);
    std::fs::write(
        d.join("run.toml"),
        "alpha = 0.5\nseed = 3\n[paths]\nreviews = \"reviews.json\"\narticles = \"articles\"\ncorpus = \"out/corpus.json\"\n",
    )
    .unwrap();
    let stdout = ok(&revex(d, &["--config", "run.toml", "--alpha", "0.1", "build-corpus"]));
    assert!(stdout.contains("alpha=0.1"), "{stdout}");
    assert!(stdout.contains("seed=3"), "{stdout}");
    let corpus = TrainingCorpus::read(&d.join("out/corpus.json")).unwrap();
    assert_eq!(corpus.alpha, 0.1);
    assert!(corpus.instances().iter().any(|i| i.label == Label::Positive));
}
