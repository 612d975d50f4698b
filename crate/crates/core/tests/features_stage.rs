//! Features stage on real raster files: PNG decoding, organizer ingestion
//! and pruning, and the resulting 1704 / 1296 level-1 widths.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bimodal_core::io::load_matrix;
use bimodal_core::pipeline::{run_stage, PipelineConfig, Stage, Workspace};

fn write_png(path: &Path, seed: u32) {
    let img = image::RgbImage::from_fn(20, 14, |x, y| {
        image::Rgb([
            ((x * 13 + seed) % 256) as u8,
            ((y * 29 + seed * 7) % 256) as u8,
            ((x + y + seed * 3) % 256) as u8,
        ])
    });
    img.save(path).unwrap();
}

/// 816-column organizer rows with the odd columns all zero, as released.
fn write_organizer(path: &Path, rows: usize, offset: usize) {
    let mut body = String::new();
    for r in 0..rows {
        let line: Vec<String> = (0..816)
            .map(|c| {
                if c % 2 == 0 {
                    format!("{}", (r + c + offset) as f64 * 0.5)
                } else {
                    "0".to_string()
                }
            })
            .collect();
        writeln!(body, "{}", line.join(" ")).unwrap();
    }
    fs::write(path, body).unwrap();
}

fn config_toml(use_organizer: bool) -> String {
    let features = if use_organizer {
        r#"
[features]
use_organizer = true
organizer_train = "organizer_train.txt"
organizer_test = "organizer_test.txt"
organizer_expected_kept = 408
"#
    } else {
        ""
    };
    format!(
        r#"
seed = 5
strategy = "general"
train_manifest = "train.tsv"
test_manifest = "test.tsv"
{features}
[vocab]
size = 16

[rbm.image]
variant = "gaussian"
hidden1 = 8
hidden2 = 8
epsilon = 0.01
gibbs_steps = 1
epochs = 1
batch_size = 4
momentum = 0.5
momentum_final = 0.9
momentum_switch_epoch = 5
weight_decay = 0.0002

[rbm.text]
variant = "replicated_softmax"
hidden1 = 8
hidden2 = 8
epsilon = 0.01
gibbs_steps = 1
epochs = 1
batch_size = 4
momentum = 0.5
momentum_final = 0.9
momentum_switch_epoch = 5
weight_decay = 0.0002

[siamese]
code_dim = 4
alpha = 0.5
lambda = 0.2
learning_rate = 0.05
momentum = 0.9
batch_size = 4
epochs = 1
"#
    )
}

fn set_up(dir: &Path, use_organizer: bool) -> PipelineConfig {
    for i in 0..3 {
        write_png(&dir.join(format!("train{i}.png")), i);
    }
    for i in 0..2 {
        write_png(&dir.join(format!("test{i}.png")), 100 + i);
    }
    fs::write(
        dir.join("train.tsv"),
        "a\ttrain0.png\tdog park\nb\ttrain1.png\tsun sea\nc\ttrain2.png\ttree\n",
    )
    .unwrap();
    fs::write(
        dir.join("test.tsv"),
        "t0\ttest0.png\tdog park\tsun sea\tA\nt1\ttest1.png\tsun sea\tdog park\tA\n",
    )
    .unwrap();
    if use_organizer {
        write_organizer(&dir.join("organizer_train.txt"), 3, 0);
        write_organizer(&dir.join("organizer_test.txt"), 2, 9);
    }
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, config_toml(use_organizer)).unwrap();
    PipelineConfig::load(&cfg_path).unwrap()
}

#[test]
fn png_decoding_without_organizer_gives_1296() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = set_up(dir.path(), false);
    let ws_dir = dir.path().join("ws");
    run_stage(Stage::Features, &cfg, dir.path(), &ws_dir, false).unwrap();
    let ws = Workspace::new(&ws_dir);
    let train = load_matrix(&ws.train_image_l1()).unwrap();
    assert_eq!(train.dim(), (3, 1296));
    let test = load_matrix(&ws.test_image_l1()).unwrap();
    assert_eq!(test.dim(), (2, 1296));
    // Deterministic: the same PNG always yields the same row.
    let again_dir = dir.path().join("ws2");
    run_stage(Stage::Features, &cfg, dir.path(), &again_dir, false).unwrap();
    let again = load_matrix(&Workspace::new(&again_dir).train_image_l1()).unwrap();
    assert_eq!(train, again);
}

#[test]
fn organizer_files_are_pruned_and_prepended() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = set_up(dir.path(), true);
    let ws_dir = dir.path().join("ws");
    run_stage(Stage::Features, &cfg, dir.path(), &ws_dir, false).unwrap();
    let ws = Workspace::new(&ws_dir);
    let train = load_matrix(&ws.train_image_l1()).unwrap();
    assert_eq!(train.dim(), (3, 1704));
    // Kept indices are the 408 even columns.
    let kept: Vec<usize> = fs::read_to_string(ws.organizer_kept())
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(kept.len(), 408);
    assert!(kept.iter().all(|k| k % 2 == 0));
    // First 408 entries of row 0 are the pruned organizer values.
    assert_eq!(train[[0, 0]], 0.0);
    assert_eq!(train[[0, 1]], 1.0); // column 2 of the raw file, value (0+2)*0.5
    let test = load_matrix(&ws.test_image_l1()).unwrap();
    assert_eq!(test.dim(), (2, 1704));
    assert_eq!(test[[0, 0]], 4.5); // (0 + 0 + 9) * 0.5
}
