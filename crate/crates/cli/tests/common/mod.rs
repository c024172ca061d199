#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gsdkit_core::synth::write_corpus;
use serde_json::Value;

pub const GSDKIT: &str = env!("CARGO_BIN_EXE_gsdkit");
pub const REFERENCE: &str = env!("CARGO_BIN_EXE_reference-enhancer");

pub fn gsdkit(args: &[&str]) -> Output {
    Command::new(GSDKIT)
        .args(args)
        .output()
        .expect("spawn gsdkit")
}

pub fn ok(args: &[&str]) -> Value {
    let out = gsdkit(args);
    assert!(
        out.status.success(),
        "gsdkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    summary(&out)
}

/// Last stdout line parsed as JSON.
pub fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().last().expect("summary line");
    serde_json::from_str(line).expect("summary is JSON")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes `count` synthetic image/mask pairs under `root` and ingests them.
pub fn ingest(root: &Path, name: &str, count: usize, gsd: &str, seed: u64) -> PathBuf {
    let (images, masks) = write_corpus(&root.join(name), count, 256, seed, 4).unwrap();
    let manifest = root.join(name).join("manifest.json");
    ok(&[
        "ingest",
        "--images",
        s(&images),
        "--masks",
        s(&masks),
        "--gsd",
        gsd,
        "--name",
        name,
        "--out",
        s(&manifest),
        "--seed",
        "7",
    ]);
    manifest
}

/// Enhancer spec running the bundled reference enhancer.
pub fn reference_spec(dir: &Path, name: &str, extra: &str, fields: Value) -> PathBuf {
    let mut spec = serde_json::json!({
        "name": name,
        "command_template": format!("'{REFERENCE}' {extra} {{job_file}}"),
        "timeout": 120,
    });
    for (k, v) in fields.as_object().unwrap() {
        spec[k] = v.clone();
    }
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}

/// Files under `dir` (recursive), relative, sorted.
pub fn files(dir: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
