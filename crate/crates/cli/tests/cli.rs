use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qapairgen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fixture_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let data = t.join("data");
    let summary = ok(&[
        "prepare",
        "--squad",
        p(&fixture("squad12.json")),
        "--annotated",
        p(&fixture("squad12.annotated")),
        "--out",
        p(&data),
    ]);
    assert!(summary.contains("8 train, 2 valid, 2 test"), "{summary}");
    for f in ["train.tagged", "valid.tagged", "test.tagged", "report.json"] {
        assert!(data.join(f).exists(), "{f}");
    }

    // a config file with data paths relative to itself
    fs::write(
        data.join("run.ini"),
        "[experiment]\nvariant = QG+F+GAE\nseed = 5\n[model]\nhidden_size = 8\nword_dim = 8\n\
         [train]\nepochs = 2\n[data]\ntrain = train.tagged\nvalid = valid.tagged\n",
    )
    .unwrap();
    let qg = t.join("qg");
    ok(&["train", "--config", p(&data.join("run.ini")), "--out", p(&qg)]);
    let log = fs::read_to_string(qg.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(fs::read_to_string(qg.join("config.ini")).unwrap().contains("variant = QG+F+GAE"));

    let bp = t.join("bp");
    ok(&[
        "train",
        "--model",
        "boundary",
        "--variant",
        "QG+F+AEB",
        "--train",
        p(&data.join("train.tagged")),
        "--set",
        "train.epochs=2",
        "--set",
        "selector.hidden_size=8",
        "--out",
        p(&bp),
    ]);

    let sel = t.join("sel.tagged");
    let spans = t.join("spans.jsonl");
    ok(&[
        "select-answer",
        "--checkpoint",
        p(&bp.join("boundary.ckpt")),
        "--input",
        p(&data.join("test.tagged")),
        "--out",
        p(&sel),
        "--spans",
        p(&spans),
    ]);
    assert_eq!(fs::read_to_string(&spans).unwrap().lines().count(), 2);

    let q = t.join("q.txt");
    let meta = t.join("meta.jsonl");
    ok(&[
        "generate",
        "--checkpoint",
        p(&qg.join("qg.ckpt")),
        "--input",
        p(&sel),
        "--out",
        p(&q),
        "--meta",
        p(&meta),
    ]);
    assert_eq!(fs::read_to_string(&q).unwrap().lines().count(), 2);
    assert!(fs::read_to_string(&meta).unwrap().contains("\"beam\":3"));

    let report = ok(&[
        "evaluate",
        "--candidates",
        p(&q),
        "--references",
        p(&data.join("test.tagged")),
        "--json",
        "--checkpoint",
        p(&qg.join("qg.ckpt")),
        "--data",
        p(&data.join("test.tagged")),
    ]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["sentences"], 2);
    assert!(v["perplexity"].as_f64().unwrap() > 1.0);

    // a second run with the same seed writes the same checkpoint
    let qg2 = t.join("qg2");
    ok(&["train", "--config", p(&data.join("run.ini")), "--out", p(&qg2)]);
    assert_eq!(fs::read(qg.join("qg.ckpt")).unwrap(), fs::read(qg2.join("qg.ckpt")).unwrap());
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.txt");
    let out = run(&["evaluate", "--candidates", p(&missing), "--references", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn misaligned_annotations_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.annotated");
    let text = fs::read_to_string(fixture("squad12.annotated")).unwrap();
    fs::write(&bad, text.replacen("ada|", "bob|", 1)).unwrap();
    let out = run(&[
        "prepare",
        "--squad",
        p(&fixture("squad12.json")),
        "--annotated",
        p(&bad),
        "--out",
        p(&tmp.path().join("d")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed to align"));
}

#[test]
fn gae_without_answers_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--variant",
        "QG+GAE",
        "--train",
        p(&fixture("squad12.annotated")),
        "--out",
        p(&tmp.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no answer column"));
}
