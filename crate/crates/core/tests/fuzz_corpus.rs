//! Replays the checked-in fuzz seeds through the same properties the fuzz
//! targets assert, so the decoders stay panic-free on stable toolchains.

use std::path::PathBuf;

use eprop::checkpoint::{decode, encode};
use eprop::data::{parse_idx_images, parse_idx_labels, parse_idx_pair, IMAGE_PIXELS, NUM_CLASSES};
use eprop::harness::ExperimentConfig;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.display().to_string(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn idx_images_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("idx_images") {
        if let Ok((n, pixels)) = parse_idx_images(&data) {
            assert_eq!(pixels.len(), n * IMAGE_PIXELS, "{name}");
            assert_eq!(data.len(), 16 + pixels.len(), "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 1);
}

#[test]
fn idx_labels_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("idx_labels") {
        if let Ok(labels) = parse_idx_labels(&data) {
            let n = u32::from_be_bytes(data[4..8].try_into().unwrap()) as usize;
            assert_eq!(labels.len(), n, "{name}");
            assert_eq!(data.len(), 8 + n, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 1);
}

#[test]
fn idx_pair_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("idx_pair") {
        if data.len() < 4 {
            continue;
        }
        let (head, rest) = data.split_at(4);
        let cut = (u32::from_le_bytes(head.try_into().unwrap()) as usize).min(rest.len());
        let (images, labels) = rest.split_at(cut);
        if let Ok(ds) = parse_idx_pair("fuzz", images, labels) {
            assert!(ds.labels().iter().all(|&l| usize::from(l) < NUM_CLASSES), "{name}");
            assert_eq!(ds.images().nrows(), ds.len(), "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 1);
}

#[test]
fn checkpoint_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("checkpoint") {
        if let Ok(params) = decode(&data) {
            assert_eq!(encode(&params), data, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn config_json_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("config_json") {
        let Ok(text) = std::str::from_utf8(&data) else {
            continue;
        };
        if let Ok(cfg) = ExperimentConfig::from_json(text) {
            let again = ExperimentConfig::from_json(&cfg.to_json()).expect("accepted config re-parses");
            assert_eq!(again, cfg, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 2);
}
