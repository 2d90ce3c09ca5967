//! Helpers for driving the `reefforge` binary from tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reefforge_core::rasterizer::{encode_mask_png, InstanceMask};

pub fn reefforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reefforge"))
        .args(args)
        .env_remove("REEFFORGE_BACKEND_URL")
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> Output {
    let out = reefforge(args);
    assert!(
        out.status.success(),
        "reefforge {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn tiny_png(width: u32, height: u32) -> Vec<u8> {
    encode_mask_png(&InstanceMask::background(width, height)).expect("png").0
}

/// `dir/images/<prefix>NNNNN.png` with one centred box label each.
pub fn write_labeled_pool(dir: &Path, prefix: &str, n: usize) {
    let png = tiny_png(8, 8);
    fs::create_dir_all(dir.join("images")).unwrap();
    fs::create_dir_all(dir.join("labels")).unwrap();
    for i in 0..n {
        fs::write(dir.join(format!("images/{prefix}{i:05}.png")), &png).unwrap();
        fs::write(dir.join(format!("labels/{prefix}{i:05}.txt")), "0 0.500000 0.500000 0.250000 0.250000\n").unwrap();
    }
}

/// Relative path → bytes for every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// generate → synth (mock) → mix → self-eval under `root`, which must hold
/// a reference pool in `root/real`. Returns the self-evaluation report.
pub fn pipeline(root: &Path, seed: u64, threads: usize, scenes: usize, config: Option<&Path>) -> serde_json::Value {
    let p = |s: &str| root.join(s).display().to_string();
    let (seed, threads, scenes) = (seed.to_string(), threads.to_string(), scenes.to_string());
    let mut common = vec!["--seed", &seed, "--threads", &threads];
    let config = config.map(|c| c.display().to_string());
    if let Some(c) = &config {
        common.extend(["--config", c]);
    }
    let run = |extra: &[&str]| {
        let mut args = common.clone();
        args.extend_from_slice(extra);
        ok(&args)
    };
    run(&["--out", &p("gen"), "generate", "--scenes", &scenes]);
    run(&["--out", &p("syn"), "synth", "--scenes-dir", &p("gen"), "--real-dir", &p("real"), "--mock"]);
    run(&["--out", &p("mix"), "mix", "--real-dir", &p("real"), "--synth-dir", &p("syn")]);
    run(&["--out", &p("eval"), "eval", "--gt-dir", &p("syn"), "--pred-dir", &p("syn")]);
    serde_json::from_slice(&fs::read(root.join("eval/eval_report.json")).unwrap()).unwrap()
}
