use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::{json, Value};

fn tiny_config(checkpoints: &str, outputs: &str) -> Value {
    json!({
        "seed": 7,
        "paths": {"data": "data", "tiles": "tiles", "checkpoints": checkpoints, "outputs": outputs},
        "dataset": {"cases": 15, "eval_cases": 6, "slide_px": 1024, "volume_extents": [12, 16, 16]},
        "magnifications": [0.5, 1.0],
        "wsi": {"latent": 8, "hidden": 4, "epochs": 2, "slides_per_step": 2, "tiles_per_slide": 3, "validation_tiles": 3},
        "mri": {"out_channels": 4, "volume": 12, "epochs": 2},
        "inference": {"tiles": 3, "repeats": 1},
        "jobs": 1
    })
}

fn gigamil(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gigamil"))
        .args(args)
        .current_dir(dir)
        .env_remove("GIGAMIL_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = gigamil(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

/// One synthesized, tiled and trained workspace shared by the tests below.
struct Fixture {
    dir: tempfile::TempDir,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        write_config(p, "gigamil.json", &tiny_config("checkpoints", "outputs"));
        ok(p, &["synth"]);
        ok(p, &["tile"]);
        ok(p, &["train"]);
        ok(p, &["infer"]);
        Fixture { dir }
    })
}

#[test]
fn pipeline_writes_every_artifact() {
    let p = fixture().dir.path();
    for f in [
        "data/split.json",
        "data/eval_labels.jsonl",
        "data/slides/case_000.ppm",
        "data/slides/case_000.json",
        "data/volumes/case_000.vol",
        "tiles/stats.json",
        "tiles/summary.json",
        "tiles/case_000/0.5/manifest.jsonl",
        "checkpoints/ensemble.json",
        "checkpoints/wsi_mpp0.5/log.jsonl",
        "checkpoints/mri/epoch_002.mrivol",
        "checkpoints/mri/epoch_002.json",
        "outputs/predictions.jsonl",
    ] {
        assert!(p.join(f).exists(), "{f} missing");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(p.join("checkpoints/ensemble.json")).unwrap()).unwrap();
    assert_eq!(manifest["members"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["prune_count"], 2);
    let rows = fs::read_to_string(p.join("outputs/predictions.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 6);
    let first: Value = serde_json::from_str(rows.lines().next().unwrap()).unwrap();
    let probs: f64 = first["probabilities"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((probs - 1.0).abs() < 1e-9);
    assert_eq!(first["member_probs"].as_object().unwrap().len(), 4);

    let out = ok(p, &["evaluate", "--out", "outputs/metrics_test.json"]);
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    for k in ["balanced_accuracy", "kappa", "f1_micro", "confusion"] {
        assert!(m.get(k).is_some(), "{k} missing");
    }
}

#[test]
fn inference_is_byte_identical_across_worker_counts() {
    let p = fixture().dir.path();
    ok(p, &["infer", "--jobs", "3", "--out", "outputs/pred_j3.jsonl"]);
    let a = fs::read(p.join("outputs/predictions.jsonl")).unwrap();
    let b = fs::read(p.join("outputs/pred_j3.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_modality_ensembles_run() {
    let p = fixture().dir.path();
    let out = ok(p, &["infer", "--modalities", "wsi", "--out", "outputs/pred_wsi.jsonl"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("pruned"));
    let rows = fs::read_to_string(p.join("outputs/pred_wsi.jsonl")).unwrap();
    let first: Value = serde_json::from_str(rows.lines().next().unwrap()).unwrap();
    assert_eq!(first["member_probs"].as_object().unwrap().len(), 2);
    assert!(first["member_probs"].as_object().unwrap().keys().all(|k| k.starts_with("wsi_")));
    // two MRI snapshots against a prune count of two: one survives
    ok(p, &["infer", "--modalities", "mri", "--out", "outputs/pred_mri.jsonl"]);
    let rows = fs::read_to_string(p.join("outputs/pred_mri.jsonl")).unwrap();
    let first: Value = serde_json::from_str(rows.lines().next().unwrap()).unwrap();
    assert_eq!(first["member_probs"].as_object().unwrap().len(), 1);
}

#[test]
fn retiling_reproduces_the_same_files() {
    let p = fixture().dir.path();
    let tiled = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config("checkpoints", "outputs");
    cfg["paths"]["data"] = json!(p.join("data"));
    write_config(tiled.path(), "gigamil.json", &cfg);
    ok(tiled.path(), &["tile"]);
    ok(tiled.path(), &["tile"]);
    for f in ["tiles/stats.json", "tiles/summary.json", "tiles/case_003/1/manifest.jsonl"] {
        assert_eq!(fs::read(p.join(f)).unwrap(), fs::read(tiled.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn interrupted_training_resumes_to_identical_checkpoints() {
    let p = fixture().dir.path();
    let cfg = write_config(p, "resume.json", &tiny_config("ckpt_resume", "out_resume"));
    let cfg = cfg.to_str().unwrap();
    let out = ok(p, &["--config", cfg, "train", "--stop-after-epoch", "1"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("(incomplete)"));
    assert!(!p.join("ckpt_resume/ensemble.json").exists());
    ok(p, &["--config", cfg, "train"]);
    for f in [
        "wsi_mpp0.5/epoch_002.milnet",
        "wsi_mpp1/epoch_002.milnet",
        "mri/epoch_002.mrivol",
        "mri/log.jsonl",
        "ensemble.json",
    ] {
        assert_eq!(
            fs::read(p.join("checkpoints").join(f)).unwrap(),
            fs::read(p.join("ckpt_resume").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_checkpoint_is_reported() {
    let p = fixture().dir.path();
    let copy = p.join("ckpt_missing");
    fs::create_dir_all(copy.join("mri")).unwrap();
    fs::copy(p.join("checkpoints/ensemble.json"), copy.join("ensemble.json")).unwrap();
    let out = gigamil(p, &["infer", "--manifest", "ckpt_missing/ensemble.json", "--out", "outputs/never.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epoch_001"), "{err}");
    assert!(!p.join("outputs/never.jsonl").exists());
}

#[test]
fn evaluate_rejects_unmatched_cases() {
    let p = fixture().dir.path();
    let preds = fs::read_to_string(p.join("outputs/predictions.jsonl")).unwrap();
    let short: String = preds.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(p.join("outputs/short.jsonl"), short).unwrap();
    let out = gigamil(p, &["evaluate", "--predictions", "outputs/short.jsonl", "--out", "outputs/m1.json"]);
    assert_eq!(out.status.code(), Some(1));
    let first: Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains(first["case_id"].as_str().unwrap()));

    let extra = preds.replacen("\"case_0", "\"case_90", 1);
    fs::write(p.join("outputs/extra.jsonl"), extra).unwrap();
    let out = gigamil(p, &["evaluate", "--predictions", "outputs/extra.jsonl", "--out", "outputs/m2.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("case_9"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut cfg = tiny_config("checkpoints", "outputs");
    cfg["magnifications"] = json!([3.0]);
    write_config(p, "bad.json", &cfg);
    let out = gigamil(p, &["--config", "bad.json", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magnification"));

    write_config(p, "unknown.json", &json!({"seeed": 1}));
    assert_eq!(gigamil(p, &["--config", "unknown.json", "synth"]).status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_gigamil"))
        .args(["synth"])
        .current_dir(p)
        .env("GIGAMIL_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn init_writes_defaults_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["init"]);
    let cfg: Value = serde_json::from_slice(&fs::read(p.join("gigamil.json")).unwrap()).unwrap();
    assert_eq!(cfg["wsi"]["latent"], 64);
    assert_eq!(cfg["magnifications"], json!([0.5, 1.0, 2.0, 4.0]));
    assert_ne!(gigamil(p, &["init"]).status.code(), Some(0));
    ok(p, &["init", "--reference", "--force"]);
    let cfg: Value = serde_json::from_slice(&fs::read(p.join("gigamil.json")).unwrap()).unwrap();
    assert_eq!(cfg["wsi"]["latent"], 1280);
    assert_eq!(cfg["wsi"]["epochs"], 50);
}
