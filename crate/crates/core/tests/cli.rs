use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use softseg::dataio::{load_dataset, read_ged_csv, read_json, read_mask_raster, read_sweep_csv, EvalReport, Manifest};
use softseg::mask::granularity;

fn softseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softseg")).current_dir(dir).args(args).output().expect("run softseg")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small, fast dataset: 16x16 images.
fn small_data(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["gen-data", "--out", "data", "--cases", "6", "--size", "16", "--val-cases", "2", "--seed", "7"];
    args.extend_from_slice(extra);
    let printed = ok(&softseg(dir, &args));
    assert_eq!(printed.trim(), "data/manifest.json");
    dir.join("data/manifest.json")
}

fn train_small(dir: &Path, epochs: &str) -> PathBuf {
    ok(&softseg(
        dir,
        &[
            "train", "--manifest", "data/manifest.json", "--loss", "ce", "--epochs", epochs, "--base-channels", "2",
            "--depth", "1", "--seed", "3", "--out", "ckpt/model.sswt", "--quiet",
        ],
    ));
    dir.join("ckpt/model.sswt")
}

#[test]
fn gen_data_defaults() {
    let dir = tempfile::tempdir().unwrap();
    ok(&softseg(dir.path(), &["gen-data", "--out", "d"]));
    let m = Manifest::load(&dir.path().join("d/manifest.json")).unwrap();
    assert_eq!(m.cases.len(), 48);
    assert!(m.cases.iter().all(|c| c.annotations.len() == 5));
    assert_eq!(m.seed, Some(0));
}

#[test]
fn single_annotator_is_binary() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_data(dir.path(), &["--annotators", "1"]);
    let ds = load_dataset(&manifest).unwrap();
    let g = granularity(1).unwrap();
    for case in &ds.cases {
        assert!(case.to_sample().label.values().iter().all(|&v| g.contains(v) && (v == 0.0 || v == 1.0)));
    }
}

#[test]
fn fuse_outputs_granular_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &[]);
    ok(&softseg(dir.path(), &["fuse", "--manifest", "data/manifest.json", "--out", "fused"]));
    let g = granularity(5).unwrap();
    let fused = dir.path().join("fused");
    let read_all = || {
        let mut files: Vec<_> = std::fs::read_dir(&fused).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|p| (p.clone(), std::fs::read(p).unwrap())).collect::<Vec<_>>()
    };
    let first = read_all();
    assert_eq!(first.len(), 6 * 2 + 1);
    for (p, _) in &first {
        if p.to_string_lossy().ends_with("_fused.sseg") {
            let m = read_mask_raster(p).unwrap();
            // stored as f32; k/5 survives the round trip to the nearest f32
            assert!(m.values().iter().all(|&v| g.levels().iter().any(|&l| (l as f32) as f64 == v)), "{}", p.display());
        }
    }
    let meta: serde_json::Value = read_json(&fused.join("fuse.json")).unwrap();
    assert_eq!(meta["seed"], 7);
    ok(&softseg(dir.path(), &["fuse", "--manifest", "data/manifest.json", "--out", "fused"]));
    assert_eq!(read_all(), first);
}

#[test]
fn fuse_unanimous_is_binary() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &["--boundary-noise", "0", "--bias-scale", "0"]);
    ok(&softseg(dir.path(), &["fuse", "--manifest", "data/manifest.json", "--out", "fused"]));
    let m = read_mask_raster(&dir.path().join("fused/case_000_fused.sseg")).unwrap();
    assert!(m.values().iter().all(|&v| v == 0.0 || v == 1.0));
    let var = read_mask_raster(&dir.path().join("fused/case_000_variance.sseg")).unwrap();
    assert!(var.values().iter().all(|&v| v == 0.0));
}

#[test]
fn fuse_missing_annotation_names_case() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &[]);
    std::fs::remove_file(dir.path().join("data/cases/case_002/ann_3.pgm")).unwrap();
    let out = softseg(dir.path(), &["fuse", "--manifest", "data/manifest.json", "--out", "fused"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("case_002"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["train", "--manifest", "m.json", "--out", "c", "--epochs", "0"],
        vec!["train", "--manifest", "m.json", "--out", "c", "--loss", "mse"],
        vec!["gen-data"],
        vec!["frobnicate"],
        vec!["eval", "--manifest", "m.json", "--checkpoint", "c"],
    ] {
        let out = softseg(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn train_writes_checkpoint_history_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &[]);
    let ckpt = train_small(dir.path(), "3");
    assert!(ckpt.exists());
    let hist = std::fs::read_to_string(dir.path().join("ckpt/model.sswt.history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 3);
    let meta: serde_json::Value = read_json(&dir.path().join("ckpt/model.sswt.json")).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["train"]["loss"], "ce");
    assert_eq!(meta["model"]["base_channels"], 2);
}

#[test]
fn train_config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &[]);
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"model": {"base_channels": 2, "depth": 1}, "train": {"epochs": 1, "loss": "dice", "augment": {"vflip_prob": 0.0}}}"#,
    )
    .unwrap();
    ok(&softseg(dir.path(), &["train", "--manifest", "data/manifest.json", "--config", "cfg.json", "--seed", "5", "--out", "c.sswt", "--quiet"]));
    let meta: serde_json::Value = read_json(&dir.path().join("c.sswt.json")).unwrap();
    assert_eq!(meta["train"]["loss"], "dice");
    assert_eq!(meta["train"]["epochs"], 1);
    assert_eq!(meta["train"]["seed"], 5);
    assert_eq!(meta["train"]["augment"]["vflip_prob"], 0.0);
    assert_eq!(meta["train"]["augment"]["hflip_prob"], 0.5);
}

#[test]
fn eval_reports_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &[]);
    train_small(dir.path(), "1");
    let printed = ok(&softseg(
        dir.path(),
        &["eval", "--manifest", "data/manifest.json", "--checkpoint", "ckpt/model.sswt", "--out", "report"],
    ));
    assert!(printed.contains("thresholds 9"), "{printed}");

    let report: EvalReport = read_json(&dir.path().join("report/report.json")).unwrap();
    assert_eq!(report.seed, Some(3));
    assert_eq!(report.thresholds.len(), 9);
    assert_eq!(report.cases.len(), 6);
    for c in &report.cases {
        let g = c.ged;
        assert!((g.d2_ged - (2.0 * g.expected_distance - g.diversity)).abs() <= 1e-12);
    }
    let rows = read_sweep_csv(&dir.path().join("report/sweep.csv")).unwrap();
    assert_eq!(rows.len(), 6 * 9);
    assert_eq!(rows[0].threshold, 0.1);
    assert_eq!(rows[8].threshold, 0.9);
    let ged = read_ged_csv(&dir.path().join("report/ged.csv")).unwrap();
    assert_eq!(ged.iter().map(|r| r.case.as_str()).collect::<Vec<_>>(), report.cases.iter().map(|c| c.id.as_str()).collect::<Vec<_>>());

    let val = softseg(
        dir.path(),
        &["eval", "--manifest", "data/manifest.json", "--checkpoint", "ckpt/model.sswt", "--out", "r2", "--split", "val", "--thresholds", "0.25:0.75:0.25"],
    );
    ok(&val);
    let report: EvalReport = read_json(&dir.path().join("r2/report.json")).unwrap();
    assert_eq!(report.cases.len(), 2);
    assert_eq!(report.thresholds, vec![0.25, 0.5, 0.75]);
}

#[test]
fn eval_thread_cap_gives_same_report() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &[]);
    train_small(dir.path(), "1");
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_softseg"))
            .current_dir(dir.path())
            .env("SOFTSEG_THREADS", threads)
            .args(["eval", "--manifest", "data/manifest.json", "--checkpoint", "ckpt/model.sswt", "--out", out])
            .output()
            .unwrap();
        ok(&o);
        std::fs::read(dir.path().join(out).join("sweep.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("3", "b"));
    let bad = Command::new(env!("CARGO_BIN_EXE_softseg"))
        .current_dir(dir.path())
        .env("SOFTSEG_THREADS", "lots")
        .args(["eval", "--manifest", "data/manifest.json", "--checkpoint", "ckpt/model.sswt", "--out", "c"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn eval_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path(), &[]);
    let missing = softseg(dir.path(), &["eval", "--manifest", "data/manifest.json", "--checkpoint", "nope.sswt", "--out", "r"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("nope.sswt"), "{}", stderr(&missing));

    train_small(dir.path(), "1");
    let sidecar = dir.path().join("ckpt/model.sswt.json");
    let mut meta: serde_json::Value = read_json(&sidecar).unwrap();
    meta["model"]["base_channels"] = 4.into();
    std::fs::write(&sidecar, serde_json::to_vec(&meta).unwrap()).unwrap();
    let mismatch = softseg(dir.path(), &["eval", "--manifest", "data/manifest.json", "--checkpoint", "ckpt/model.sswt", "--out", "r"]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(stderr(&mismatch).contains("does not match"), "{}", stderr(&mismatch));

    let bad_range = softseg(dir.path(), &["eval", "--manifest", "data/manifest.json", "--checkpoint", "ckpt/model.sswt", "--out", "r", "--thresholds", "0:1:0.5"]);
    assert_eq!(bad_range.status.code(), Some(1));
}
