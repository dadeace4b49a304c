use std::path::Path;
use std::process::{Command, Output};

use cgep_core::metrics::RunReport;

fn cgep(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgep"))
        .arg("--root")
        .arg(root)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = cgep(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
name = "toy"
dataset = "esc"
data_dir = "data/esc"
candidates = 8
learning_rate = 1e-3
epochs = 1
seed = 5
folds = [2]
"#;

/// Synthetic corpus, built dataset and splits under `root`.
fn prepare(root: &Path) {
    let r = root.to_str().unwrap();
    let corpus = format!("{r}/corpus/esc.jsonl");
    let data = format!("{r}/data/esc");
    ok(root, &["synth", "--docs", "28", "--topics", "7", "--out", &corpus]);
    let table = ok(
        root,
        &["build", "--corpus", &corpus, "--format", "esc", "--candidates", "8", "--seed", "1", "--out", &data],
    );
    assert!(table.contains("Instances"));
    ok(root, &["splits", "--dataset", "esc", "--in", &data]);
    std::fs::write(root.join("toy.toml"), CONFIG).unwrap();
}

#[test]
fn train_eval_score_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    prepare(root);
    let r = root.to_str().unwrap();

    let stats = ok(root, &["stats", "--in", &format!("{r}/data/esc")]);
    assert!(stats.lines().count() == 2);

    let printed = ok(root, &["train", "--config", "toy.toml"]);
    assert!(printed.contains("fold 0") || printed.contains("mean"));
    let run = root.join("runs/toy");
    for f in ["config.toml", "manifest.json", "metrics.json", "predictions.jsonl", "fold2/model.json", "fold2/train_log.jsonl"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let first = std::fs::read_to_string(run.join("metrics.json")).unwrap();
    let report: RunReport = serde_json::from_str(&first).unwrap();
    assert_eq!(report.folds.len(), 1);

    // same inputs, same metrics
    ok(root, &["train", "--config", "toy.toml"]);
    assert_eq!(std::fs::read_to_string(run.join("metrics.json")).unwrap(), first);

    let ckpt = run.join("fold2/model.json");
    let eval = ok(root, &["eval", "--ckpt", ckpt.to_str().unwrap(), "--split", "test"]);
    let test_row = eval.lines().nth(1).unwrap().to_string();
    let fold_row = report.folds[0].row("test");
    assert_eq!(test_row, fold_row, "eval reproduces the training-time test metrics");

    let pred = run.join("predictions.jsonl");
    let scored = ok(
        root,
        &["score", "--pred", pred.to_str().unwrap(), "--data", &format!("{r}/data/esc"), "--folds", "1"],
    );
    assert!(scored.contains("MRR"));
    assert!(run.join("predictions.metrics.json").exists());

    let lin = ok(root, &["linearize", "--instance", &format!("{r}/data/esc/instances.jsonl")]);
    assert!(lin.starts_with("[CLS]") && lin.contains("[MASK]"));
}

#[test]
fn failures_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out = cgep(root, &["stats", "--in", "missing"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("missing"));

    prepare(root);
    // candidate-set size must match the config
    std::fs::write(root.join("bad.toml"), CONFIG.replace("candidates = 8", "candidates = 256")).unwrap();
    let out = cgep(root, &["train", "--config", "bad.toml"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("256"));

    std::fs::write(root.join("badfold.toml"), CONFIG.replace("folds = [2]", "folds = [9]")).unwrap();
    let out = cgep(root, &["train", "--config", "badfold.toml"]);
    assert!(!out.status.success());
}

#[test]
fn sep_and_ablation_tables() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    prepare(root);
    let r = root.to_str().unwrap();

    let derived = ok(root, &["sep", "--in", &format!("{r}/data/esc"), "--out", &format!("{r}/data/sep")]);
    assert!(derived.contains("SEP"));
    assert!(root.join("data/sep/instances.jsonl").exists());

    let table = ok(root, &["sep", "--config", "toy.toml"]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("CGEP"));
    assert!(lines[2].starts_with("SEP") && (lines[2].contains('↑') || lines[2].contains('↓')));

    let table = ok(root, &["ablate", "--config", "toy.toml", "--flag", "no_schm"]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("SeDGPL"));
    assert!(lines[2].starts_with("w/o Schm."));
    assert!(root.join("runs/toy-no_schm/metrics.json").exists());
}
