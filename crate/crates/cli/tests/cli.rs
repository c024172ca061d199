mod common;

use std::fs;

use common::*;
use gsdkit_core::DatasetManifest;
use serde_json::{json, Value};

fn stderr_lines(out: &std::process::Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|_| panic!("not JSON: {l}")))
        .collect()
}

#[test]
fn dry_run_reports_plan_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = ingest(dir.path(), "P50", 10, "50", 1);
    let out = dir.path().join("h");
    let summary = ok(&[
        "harmonize",
        "--manifest",
        s(&manifest),
        "--target-gsd",
        "20",
        "--out",
        s(&out),
        "--dry-run",
    ]);
    assert_eq!(summary["dry_run"], true);
    assert_eq!(summary["planned_entries"], 90);
    assert_eq!(summary["target_dims"], json!([640, 640]));
    assert_eq!(
        summary["planned_splits"],
        json!({"train": 54, "val": 9, "test": 27})
    );
    assert!(!out.exists());

    let pairs = dir.path().join("p");
    let summary = ok(&[
        "pairs",
        "--manifest",
        s(&manifest),
        "--out",
        s(&pairs),
        "--resolutions",
        "16",
        "32",
        "--dry-run",
    ]);
    assert_eq!(summary["planned_entries"], 20);
    assert!(!pairs.exists());

    let (images, masks) =
        gsdkit_core::synth::write_corpus(&dir.path().join("raw"), 5, 32, 0, 1).unwrap();
    let m = dir.path().join("raw.json");
    let summary = ok(&[
        "ingest",
        "--images",
        s(&images),
        "--masks",
        s(&masks),
        "--gsd",
        "20",
        "--out",
        s(&m),
        "--dry-run",
    ]);
    assert_eq!(summary["planned_entries"], 5);
    assert_eq!(summary["name"], "raw");
    assert!(!m.exists());
}

#[test]
fn unsorted_resolutions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = ingest(dir.path(), "P20", 4, "20", 2);
    let out = gsdkit(&[
        "pairs",
        "--manifest",
        s(&manifest),
        "--out",
        s(&dir.path().join("p")),
        "--resolutions",
        "64",
        "32",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let lines = stderr_lines(&out);
    assert_eq!(lines.last().unwrap()["kind"], "InvalidPairSpec");
    assert!(!dir.path().join("p").exists());
}

#[test]
fn missing_mask_names_the_entry() {
    let dir = tempfile::tempdir().unwrap();
    let (images, masks) =
        gsdkit_core::synth::write_corpus(&dir.path().join("d"), 4, 32, 0, 1).unwrap();
    fs::remove_file(masks.join("img_0002.png")).unwrap();
    let out = gsdkit(&[
        "ingest",
        "--images",
        s(&images),
        "--masks",
        s(&masks),
        "--gsd",
        "20",
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_lines(&out).pop().unwrap();
    assert_eq!(err["level"], "error");
    assert_eq!(err["kind"], "MissingMask");
    assert_eq!(err["id"], "img_0002");
}

#[test]
fn stage_logs_are_json_and_respect_level() {
    let dir = tempfile::tempdir().unwrap();
    let (images, masks) =
        gsdkit_core::synth::write_corpus(&dir.path().join("d"), 6, 32, 0, 1).unwrap();
    let args = |level: &'static str, out: &str| {
        vec![
            "ingest".to_owned(),
            "--images".into(),
            s(&images).into(),
            "--masks".into(),
            s(&masks).into(),
            "--gsd".into(),
            "20".into(),
            "--out".into(),
            out.into(),
            "--log-level".into(),
            level.into(),
        ]
    };
    let out_a = dir.path().join("a.json");
    let a: Vec<String> = args("info", s(&out_a));
    let res = gsdkit(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(res.status.success());
    let stages: Vec<_> = stderr_lines(&res)
        .into_iter()
        .map(|l| l["stage"].clone())
        .collect();
    assert_eq!(stages, [json!("build_manifest"), json!("assign_splits")]);
    for line in stderr_lines(&res) {
        assert!(line["elapsed_ms"].is_u64());
    }

    let out_b = dir.path().join("b.json");
    let b: Vec<String> = args("error", s(&out_b));
    let res = gsdkit(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(res.status.success());
    assert!(res.stderr.is_empty());
}

#[test]
fn workspace_and_config_supply_defaults() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), "P50", 10, "50", 3);
    fs::write(
        dir.path().join("config.json"),
        json!({"seed": 11, "target_gsd_cm": 20, "grid": {"patch": 256, "rows": 3, "cols": 3}, "workers": 2})
            .to_string(),
    )
    .unwrap();
    let ws = s(dir.path());
    let summary = ok(&[
        "--workspace",
        ws,
        "--config",
        "config.json",
        "harmonize",
        "--manifest",
        "P50/manifest.json",
        "--out",
        "P50-20p",
    ]);
    assert_eq!(summary["entries"], 90);
    assert_eq!(summary["gsd_cm"], 20);
    let m = DatasetManifest::load(&dir.path().join("P50-20p/manifest.json")).unwrap();
    assert_eq!(m.name, "P50-lanczos");
    assert_eq!(m.entries[0].id, "img_0000_p0");

    fs::write(
        dir.path().join("bad.json"),
        r#"{"seed": 1, "colour": "red"}"#,
    )
    .unwrap();
    let out = gsdkit(&[
        "--workspace",
        ws,
        "--config",
        "bad.json",
        "harmonize",
        "--manifest",
        "P50/manifest.json",
        "--out",
        "x",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_changes_assignment_but_not_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (images, masks) =
        gsdkit_core::synth::write_corpus(&dir.path().join("d"), 40, 16, 0, 2).unwrap();
    let mut assignments = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("{seed}.json"));
        let summary = ok(&[
            "ingest",
            "--images",
            s(&images),
            "--masks",
            s(&masks),
            "--gsd",
            "5/2",
            "--out",
            s(&out),
            "--seed",
            seed,
        ]);
        assert_eq!(
            summary["splits"],
            json!({"train": 24, "val": 4, "test": 12})
        );
        let m = DatasetManifest::load(&out).unwrap();
        assert_eq!(m.gsd_cm.to_string(), "5/2");
        assignments.push(m.entries.into_iter().map(|e| e.split).collect::<Vec<_>>());
    }
    assert_ne!(assignments[0], assignments[1]);
}

#[test]
fn eval_accumulates_a_cross_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = ingest(dir.path(), "P20", 10, "20", 4);
    let m = DatasetManifest::load(&manifest).unwrap();
    let gt_pred = dir.path().join("gt");
    let empty_pred = dir.path().join("empty");
    fs::create_dir_all(&gt_pred).unwrap();
    fs::create_dir_all(&empty_pred).unwrap();
    let blank = gsdkit_core::LabelMask::filled(256, 256, 0).unwrap();
    for e in &m.entries {
        fs::copy(&e.mask_path, gt_pred.join(format!("{}.png", e.id))).unwrap();
        blank
            .write_png(&empty_pred.join(format!("{}.png", e.id)))
            .unwrap();
    }
    let reports = dir.path().join("reports");
    let a = ok(&[
        "eval",
        "--pred-dir",
        s(&gt_pred),
        "--manifest",
        s(&manifest),
        "--source",
        "P20",
        "--out",
        s(&reports),
    ]);
    assert_eq!(a["entries"], 3);
    assert_eq!(a["trees"], "100.00");
    let b = ok(&[
        "eval",
        "--pred-dir",
        s(&empty_pred),
        "--manifest",
        s(&manifest),
        "--source",
        "P50",
        "--out",
        s(&reports),
    ]);
    assert_eq!(b["trees"], "0.00");
    // re-running a pair replaces it
    ok(&[
        "eval",
        "--pred-dir",
        s(&gt_pred),
        "--manifest",
        s(&manifest),
        "--source",
        "P20",
        "--out",
        s(&reports),
    ]);

    let csv = fs::read_to_string(reports.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("source,target,class,iou"));
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.contains("P20,P20,trees,100.00\n"));
    assert!(csv.contains("P50,P20,trees,0.00\n"));
    let md = fs::read_to_string(reports.join("report.md")).unwrap();
    assert!(md.starts_with("| Class | P20 → P20 | P50 → P20 |"), "{md}");

    fs::remove_file(gt_pred.join(format!("{}.png", m.entries[0].id))).unwrap();
    let out = gsdkit(&[
        "eval",
        "--pred-dir",
        s(&gt_pred),
        "--manifest",
        s(&manifest),
        "--source",
        "P20",
        "--out",
        s(&reports),
        "--split",
        "all",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        stderr_lines(&out).pop().unwrap()["kind"],
        "MissingPrediction"
    );
}

#[test]
fn enhancer_at_source_gsd_skips_tiling() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = ingest(dir.path(), "P20", 6, "20", 5);
    let g = reference_spec(
        dir.path(),
        "g",
        "--filter lanczos3",
        json!({"scale": "5/2", "suffix": "G"}),
    );
    let out = dir.path().join("P20G");
    let summary = ok(&[
        "harmonize",
        "--manifest",
        s(&manifest),
        "--method",
        "enhancer",
        "--enhancer",
        s(&g),
        "--target-gsd",
        "20",
        "--out",
        s(&out),
    ]);
    assert_eq!(summary["name"], "P20G");
    assert_eq!(summary["entries"], 6);
    let m = DatasetManifest::load(&out.join("manifest.json")).unwrap();
    let src = DatasetManifest::load(&manifest).unwrap();
    for (e, s) in m.entries.iter().zip(&src.entries) {
        assert_eq!(e.id, s.id);
        assert_eq!(
            gsdkit_core::raster::png_dimensions(&e.image_path).unwrap(),
            (256, 256)
        );
        assert_eq!(
            fs::read(&e.mask_path).unwrap(),
            fs::read(&s.mask_path).unwrap()
        );
    }
    assert!(!out.join(".jobs").exists());

    let out = gsdkit(&[
        "harmonize",
        "--manifest",
        s(&manifest),
        "--target-gsd",
        "20",
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn enhance_picks_native_size_and_rejects_bad_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = ingest(dir.path(), "P50", 3, "50", 6);
    let x2 = reference_spec(dir.path(), "x2", "", json!({"scale": 2, "suffix": "S"}));
    let out = dir.path().join("S");
    let summary = ok(&[
        "enhance",
        "--manifest",
        s(&manifest),
        "--enhancer",
        s(&x2),
        "--out",
        s(&out),
    ]);
    assert_eq!(summary["name"], "P50S");
    assert_eq!(summary["gsd_cm"], 25);
    let m = DatasetManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(
        gsdkit_core::raster::png_dimensions(&m.entries[0].image_path).unwrap(),
        (512, 512)
    );
    assert_eq!(
        gsdkit_core::raster::png_dimensions(&m.entries[0].mask_path).unwrap(),
        (512, 512)
    );

    let res = gsdkit(&[
        "enhance",
        "--manifest",
        s(&manifest),
        "--enhancer",
        s(&x2),
        "--out",
        s(&dir.path().join("y")),
        "--target-size",
        "0x5",
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn scenario_rejects_degrade_to_source_size() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = ingest(dir.path(), "P20", 4, "20", 7);
    let spec = dir.path().join("scenario.json");
    fs::write(
        &spec,
        json!({"source_manifest": manifest, "degrade_to": 256}).to_string(),
    )
    .unwrap();
    let out = gsdkit(&[
        "scenario",
        "--spec",
        s(&spec),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        stderr_lines(&out).pop().unwrap()["kind"],
        "InvalidDegradeTarget"
    );

    fs::write(
        &spec,
        json!({"source_manifest": "P20/manifest.json", "degrade_to": 32}).to_string(),
    )
    .unwrap();
    let summary = ok(&[
        "scenario",
        "--spec",
        s(&spec),
        "--out",
        s(&dir.path().join("o")),
        "--dry-run",
    ]);
    assert_eq!(summary["manifests"], json!(["P20lr"]));
    assert_eq!(summary["planned_entries"], 4);
}
