//! End-to-end behavior of the `rgb2point` binary.

use std::path::Path;
use std::process::{Command, Output};

use rgb2point::metrics::{MetricKind, MetricReport};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgb2point"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dataset(dir: &Path, gt: usize) -> std::path::PathBuf {
    let data = dir.join("data");
    ok(&[
        "synth", "--out", s(&data), "--per-category", "5", "--image-size", "48", "--cloud-points", "512",
    ]);
    let manifest = dir.join("manifest.jsonl");
    ok(&["prepare", "--root", s(&data), "--out", s(&manifest), "--gt-resolution", &gt.to_string()]);
    manifest
}

fn read_report(path: &Path) -> MetricReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn prepare_is_deterministic_and_reports_missing_roots() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 128);
    let again = dir.path().join("again.jsonl");
    ok(&["prepare", "--root", s(&dir.path().join("data")), "--out", s(&again), "--gt-resolution", "128"]);
    assert_eq!(std::fs::read(&manifest).unwrap(), std::fs::read(&again).unwrap());
    assert!(dir.path().join("manifest.summary.json").is_file());

    let out = bin(&["prepare", "--root", s(&dir.path().join("nope")), "--out", s(&again)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 64);
    let run = dir.path().join("run");
    let out = bin(&["train", "--manifest", s(&manifest), "--out-dir", s(&run), "--preset", "huge"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bin(&[
        "train", "--manifest", s(&manifest), "--out-dir", s(&run), "--preset", "desk", "--heads", "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(bin(&["frobnicate"]).status.code() == Some(2));
}

#[test]
fn train_eval_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 64);
    let run = dir.path().join("run");
    ok(&[
        "train", "--manifest", s(&manifest), "--out-dir", s(&run), "--preset", "desk", "--n-points", "64",
        "--max-steps", "4", "--batch-size", "2",
    ]);
    for f in ["run_config.json", "last.ckpt", "train_log.jsonl", "fit_report.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(run.join("train_log.jsonl")).unwrap().lines().count(), 4);

    ok(&[
        "train", "--manifest", s(&manifest), "--out-dir", s(&run), "--resume", s(&run.join("last.ckpt")),
        "--max-steps", "6",
    ]);
    assert_eq!(std::fs::read_to_string(run.join("train_log.jsonl")).unwrap().lines().count(), 6);

    let ev = dir.path().join("eval");
    ok(&[
        "eval", "--checkpoint", s(&run.join("last.ckpt")), "--manifest", s(&manifest), "--out", s(&ev),
        "--metrics", "cd,emd,fscore",
    ]);
    let report = read_report(&ev.join("report.json"));
    assert_eq!(report.per_category.len(), 3);
    assert!(report.average[&MetricKind::Chamfer] > 0.0);
    assert!(std::fs::read_to_string(ev.join("report.txt")).unwrap().contains("Average"));

    let image = std::fs::read_dir(dir.path().join("data/box/box_0000/renders"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let cloud = dir.path().join("out.ply");
    ok(&[
        "infer", "--checkpoint", s(&run.join("last.ckpt")), "--image", s(&image), "--out", s(&cloud), "--time",
        "--repeats", "3", "--warmup", "1",
    ]);
    let ply = std::fs::read_to_string(&cloud).unwrap();
    assert!(ply.contains("element vertex 64"));
    let timing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.infer.json")).unwrap()).unwrap();
    assert_eq!(timing["timing"]["iterations"], 3);
}

#[test]
fn evaluation_rejects_resolution_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 64);
    let run = dir.path().join("run");
    ok(&[
        "train", "--manifest", s(&manifest), "--out-dir", s(&run), "--preset", "desk", "--n-points", "64",
        "--max-steps", "1",
    ]);
    let other = dir.path().join("m128.jsonl");
    ok(&["prepare", "--root", s(&dir.path().join("data")), "--out", s(&other), "--gt-resolution", "128"]);
    let out = bin(&[
        "eval", "--checkpoint", s(&run.join("last.ckpt")), "--manifest", s(&other), "--out",
        s(&dir.path().join("ev")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("128"));
}

#[test]
fn precomputed_scores_reproduce_published_summary() {
    let dir = tempfile::tempdir().unwrap();
    let values = [
        ("airplane", 0.581),
        ("bench", 0.511),
        ("cabinet", 0.464),
        ("car", 0.523),
        ("chair", 0.544),
        ("display", 0.487),
        ("lamp", 0.471),
        ("loudspeaker", 0.462),
        ("rifle", 0.567),
        ("sofa", 0.481),
        ("table", 0.436),
        ("telephone", 0.483),
        ("watercraft", 0.552),
    ];
    let table: serde_json::Map<String, serde_json::Value> = values
        .iter()
        .map(|(c, v)| (c.to_string(), serde_json::json!({ "fscore": v })))
        .collect();
    let input = dir.path().join("ours.json");
    std::fs::write(&input, serde_json::to_string(&table).unwrap()).unwrap();
    let ev = dir.path().join("ev");
    ok(&["eval", "--precomputed", s(&input), "--out", s(&ev)]);
    let report = read_report(&ev.join("report.json"));
    assert!((report.average[&MetricKind::Fscore] - 0.505).abs() <= 5e-4);
    assert!((report.stability[&MetricKind::Fscore] - 0.045).abs() <= 5e-4);

    let rep = dir.path().join("rep");
    ok(&["report", "--results", s(&ev.join("report.json")), "--tables", "table1", "--out", s(&rep)]);
    let t1: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rep.join("table1.json")).unwrap()).unwrap();
    let average = t1["improvements"]
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["label"] == "average")
        .unwrap()["percent"]
        .as_f64()
        .unwrap();
    assert!((average - 47.16).abs() <= 0.1, "{average}");
}

#[test]
fn report_reproduces_caption_improvements() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("rep");
    ok(&["report", "--out", s(&rep), "--tables", "table1,table2,table3"]);
    let t2 = std::fs::read_to_string(rep.join("table2.txt")).unwrap();
    assert!(t2.contains("cd mean: +39.26%") && t2.contains("emd mean: +26.95%"), "{t2}");
    let t3 = std::fs::read_to_string(rep.join("table3.txt")).unwrap();
    assert!(t3.contains("cd: +51.15%") && t3.contains("emd: +36.17%"), "{t3}");
    let t1: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rep.join("table1.json")).unwrap()).unwrap();
    assert!(t1["improvements"].as_array().unwrap().iter().any(|i| i["label"] == "stability"));
    let out = bin(&["report", "--out", s(&rep), "--tables", "table9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablation_runs_the_configured_cell() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 64);
    let out = dir.path().join("ab");
    ok(&[
        "ablate", "--manifest", s(&manifest), "--out-dir", s(&out), "--grid", "default", "--preset", "desk",
        "--n-points", "64", "--max-steps", "2", "--metrics", "cd", "--jobs", "2",
    ]);
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert_eq!(rows[0]["heads"], 4);
    assert!(std::fs::read_to_string(out.join("ablation.txt")).unwrap().contains("cd:avg"));

    let out2 = bin(&[
        "ablate", "--manifest", s(&manifest), "--out-dir", s(&out), "--grid", "default", "--preset", "desk",
        "--no-pretrained",
    ]);
    assert_eq!(out2.status.code(), Some(2));
}
