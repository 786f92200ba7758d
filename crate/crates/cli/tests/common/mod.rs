//! Small on-disk fixtures for driving the binary end to end.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use gaze_align_core::tensor_io::{npy, ElementType, NpyTensor};
use gaze_align_core::AttentionStack;

pub const BIN: &str = env!("CARGO_BIN_EXE_gaze-align");
pub const SOURCE_DATE_EPOCH: &str = "1700000000";

/// Original image size of the fixtures, before any resampling.
pub const ORIG: (usize, usize) = (160, 120);
pub const PERSON: u64 = 1;
pub const CAR: u64 = 3;
pub const DOG: u64 = 18;

/// Runs the binary in `cwd` with a pinned timestamp.
pub fn run(cwd: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(cwd).args(args).env("SOURCE_DATE_EPOCH", SOURCE_DATE_EPOCH).env_remove("GAZE_ALIGN_JOBS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<f64> {
    vec![x0, y0, x1, y0, x1, y1, x0, y1]
}

fn random_stack(rng: &mut ChaCha8Rng, layers: usize, heads: usize, tokens: usize) -> AttentionStack {
    let mut v = Vec::with_capacity(layers * heads * tokens * tokens);
    for _ in 0..layers * heads * tokens {
        let row: Vec<f64> = (0..tokens).map(|_| rng.gen::<f64>().powi(2) + 0.01).collect();
        let s: f64 = row.iter().sum();
        v.extend(row.iter().map(|x| x / s));
    }
    AttentionStack::new(layers, heads, tokens, v).unwrap()
}

/// Writes, under `dir`:
/// - `fixations.json`: three observers per image;
/// - `attn/manifest.json` plus `attn/<id>.npy` (2 layers × 2 heads, 4×4
///   patches plus a class token);
/// - `annotations.json`: a small person, a medium car and a large dog per
///   image;
/// - `pairs.csv`: paired values with a clear difference.
///
/// Ids are `101..=100+n`.
pub fn write_fixtures(dir: &Path, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<u64> = (101..=100 + n as u64).collect();
    let (w, h) = ORIG;

    let images: Vec<_> = ids
        .iter()
        .map(|&id| {
            let observers: Vec<_> = (0..3)
                .map(|_| {
                    let k = rng.gen_range(4..9);
                    let fixes: Vec<[f64; 2]> =
                        (0..k).map(|_| [rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64)]).collect();
                    json!({ "fixations": fixes })
                })
                .collect();
            json!({ "image_id": id, "width": w, "height": h, "observers": observers })
        })
        .collect();
    write_json(&dir.join("fixations.json"), &json!({ "images": images }));

    std::fs::create_dir_all(dir.join("attn")).unwrap();
    let mut entries = Vec::new();
    for &id in &ids {
        let stack = random_stack(&mut rng, 2, 2, 17);
        let tensor = NpyTensor::from_attention_stack(&stack, ElementType::F32);
        npy::write_tensor_file(dir.join(format!("attn/{id}.npy")), &tensor).unwrap();
        entries.push(json!({ "image_id": id, "tensor_path": format!("{id}.npy") }));
    }
    write_json(&dir.join("attn/manifest.json"), &json!({ "model": "fixture-vit", "entries": entries }));

    let mut anns = Vec::new();
    let mut next = 1;
    for &id in &ids {
        let px = rng.gen_range(8.0..50.0);
        let cx = rng.gen_range(70.0..110.0);
        // small, medium and large in turn
        for (cat, poly) in [
            (PERSON, rect(px, 10.0, px + 12.0, 46.0)),
            (CAR, rect(cx, 40.0, cx + 40.0, 80.0)),
            (DOG, rect(4.0, 4.0, 156.0, 116.0)),
        ] {
            let area = (poly[2] - poly[0]) * (poly[5] - poly[1]);
            anns.push(json!({
                "id": next, "image_id": id, "category_id": cat, "area": area,
                "segmentation": [poly], "iscrowd": 0
            }));
            next += 1;
        }
    }
    let imgs: Vec<_> = ids.iter().map(|&id| json!({ "id": id, "width": w, "height": h })).collect();
    let cats = json!([
        { "id": PERSON, "name": "person" },
        { "id": CAR, "name": "car" },
        { "id": DOG, "name": "dog" }
    ]);
    write_json(&dir.join("annotations.json"), &json!({ "images": imgs, "annotations": anns, "categories": cats }));

    let mut pairs = String::from("image_id,a,b\n");
    for &id in &ids {
        let a: f64 = rng.gen_range(0.4..0.6);
        pairs.push_str(&format!("{id},{a},{}\n", a - 0.05 + rng.gen_range(-0.02..0.02)));
    }
    std::fs::write(dir.join("pairs.csv"), pairs).unwrap();
    ids
}

pub fn write_json(path: &Path, v: &serde_json::Value) {
    std::fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

/// Every regular file under `root`, relative, sorted.
pub fn tree(root: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Every subcommand in dependency order, with paths relative to the
/// fixture directory.
pub fn pipeline() -> Vec<Vec<&'static str>> {
    vec![
        vec!["density", "--fixations", "fixations.json", "--out", "human", "--size", "32", "--pgm", "--consistency"],
        vec!["rollout", "--manifest", "attn/manifest.json", "--out", "model", "--size", "32", "--pgm"],
        vec![
            "rollout",
            "--manifest",
            "attn/manifest.json",
            "--out",
            "model_pre",
            "--size",
            "32",
            "--order",
            "before-upsample",
        ],
        vec![
            "score",
            "--model-maps",
            "model",
            "--human-maps",
            "human",
            "--fixations",
            "fixations.json",
            "--out",
            "scores/model.csv",
        ],
        vec![
            "score",
            "--model-maps",
            "model_pre",
            "--human-maps",
            "human",
            "--fixations",
            "fixations.json",
            "--out",
            "scores/model_pre.csv",
        ],
        vec!["masks", "--annotations", "annotations.json", "--out", "masks", "--size", "32"],
        vec![
            "bias",
            "--maps",
            "model",
            "--annotations",
            "annotations.json",
            "--which",
            "animacy",
            "--out",
            "bias/animacy.json",
        ],
        vec![
            "bias",
            "--maps",
            "model",
            "--annotations",
            "annotations.json",
            "--which",
            "size",
            "--out",
            "bias/size.json",
        ],
        vec![
            "bias",
            "--maps",
            "model",
            "--annotations",
            "annotations.json",
            "--which",
            "entropy",
            "--out",
            "bias/entropy_model.json",
        ],
        vec!["bias", "--maps", "human", "--which", "entropy", "--out", "bias/entropy_human.json"],
        vec!["stats", "--pairs", "pairs.csv", "--test", "paired-t", "--out", "stats/paired.json"],
        vec![
            "stats",
            "--pairs",
            "pairs.csv",
            "--test",
            "bf01",
            "--out",
            "stats/bf01.json",
            "--label",
            "fixture-benchmark",
        ],
        vec!["stats", "--pairs", "pairs.csv", "--test", "pearson", "--out", "stats/pearson.json"],
        vec![
            "tune",
            "--synthetic",
            "12",
            "--max-steps",
            "6",
            "--epochs",
            "50",
            "--batch-size",
            "4",
            "--lr",
            "1e-3",
            "--image-size",
            "16",
            "--patch-size",
            "4",
            "--embed-dim",
            "8",
            "--layers",
            "2",
            "--heads",
            "2",
            "--mlp-dim",
            "16",
            "--out",
            "ckpt",
        ],
        vec![
            "report",
            "--scores",
            "scores/model.csv",
            "scores/model_pre.csv",
            "--bias",
            "bias/animacy.json",
            "bias/size.json",
            "bias/entropy_model.json",
            "bias/entropy_human.json",
            "--stats",
            "stats/paired.json",
            "stats/bf01.json",
            "--out",
            "report",
        ],
    ]
}
