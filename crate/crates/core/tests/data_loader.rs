use std::io::Read;
use std::path::PathBuf;

use eprop::data::{
    batch_iterator, class_histogram, encode_all, load_idx, load_split, Split, IMAGE_PIXELS,
};

fn write_idx(dir: &std::path::Path, images: &[[u8; IMAGE_PIXELS]], labels: &[u8]) -> (PathBuf, PathBuf) {
    let img_path = dir.join("images");
    let lbl_path = dir.join("labels");
    let mut img = Vec::new();
    for v in [0x803u32, images.len() as u32, 28, 28] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        img.extend_from_slice(im);
    }
    let mut lbl = Vec::new();
    for v in [0x801u32, labels.len() as u32] {
        lbl.extend_from_slice(&v.to_be_bytes());
    }
    lbl.extend_from_slice(labels);
    std::fs::write(&img_path, img).unwrap();
    std::fs::write(&lbl_path, lbl).unwrap();
    (img_path, lbl_path)
}

#[test]
fn hand_crafted_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = [0u8; IMAGE_PIXELS];
    let mut b = [0u8; IMAGE_PIXELS];
    for p in 0..IMAGE_PIXELS {
        a[p] = (p % 256) as u8;
        b[p] = 255 - (p % 256) as u8;
    }
    let (ip, lp) = write_idx(dir.path(), &[a, b], &[3, 9]);
    let ds = load_idx(&ip, &lp).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.labels(), &[3, 9]);
    assert_eq!(ds.raw_image(0), &a[..]);
    assert_eq!(ds.raw_image(1), &b[..]);
    for p in [0, 1, 255, 256, 783] {
        assert_eq!(ds.pixel(0, p), a[p] as f64 / 255.0);
        assert_eq!(ds.pixel(1, p), b[p] as f64 / 255.0);
    }
    assert_eq!(ds.pixel(1, 0), 1.0);
    assert_eq!(ds.pixel(0, 0), 0.0);
}

#[test]
fn malformed_files_are_rejected_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_idx(dir.path(), &[[0; IMAGE_PIXELS]], &[1]);
    // truncate the image file
    let bytes = std::fs::read(&ip).unwrap();
    std::fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
    assert!(load_idx(&ip, &lp).is_err());
    // label/image count mismatch
    let (ip, lp) = write_idx(dir.path(), &[[0; IMAGE_PIXELS]], &[1, 2]);
    assert!(load_idx(&ip, &lp).is_err());
    // label outside 0..10
    let (ip, lp) = write_idx(dir.path(), &[[0; IMAGE_PIXELS]], &[10]);
    assert!(load_idx(&ip, &lp).is_err());
    let missing = dir.path().join("nope");
    let err = load_idx(&missing, &lp).unwrap_err().to_string();
    assert!(err.contains("nope"), "{err}");
}

fn data_root() -> Option<PathBuf> {
    let root = std::env::var_os("EPROP_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    root.join("mnist/t10k-labels-idx1-ubyte").exists().then_some(root)
}

/// Reads an IDX file with nothing but byte arithmetic.
fn minimal_read(path: &std::path::Path) -> (Vec<u32>, Vec<u8>) {
    let mut bytes = Vec::new();
    std::fs::File::open(path).unwrap().read_to_end(&mut bytes).unwrap();
    let ndim = bytes[3] as usize;
    let dims: Vec<u32> = (0..ndim)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().unwrap()))
        .collect();
    (dims, bytes[4 + 4 * ndim..].to_vec())
}

#[test]
fn mnist_matches_an_independent_reader() {
    let Some(root) = data_root() else {
        eprintln!("skipping: MNIST not found (set EPROP_DATA_DIR or run scripts/fetch_data.sh)");
        return;
    };
    for (split, prefix, count) in [(Split::Train, "train", 60_000), (Split::Test, "t10k", 10_000)] {
        let ds = load_split(&root, "mnist", split).unwrap();
        let (ldims, labels) = minimal_read(&root.join(format!("mnist/{prefix}-labels-idx1-ubyte")));
        let (idims, pixels) = minimal_read(&root.join(format!("mnist/{prefix}-images-idx3-ubyte")));
        assert_eq!(ldims, vec![count]);
        assert_eq!(idims, vec![count, 28, 28]);
        assert_eq!(ds.len(), count as usize);
        assert_eq!(ds.labels(), &labels[..]);
        let mut hist = [0usize; 10];
        for &l in &labels {
            hist[l as usize] += 1;
        }
        assert_eq!(class_histogram(ds.labels()), hist);
        for k in [0, 1, count as usize / 2, count as usize - 1] {
            assert_eq!(ds.raw_image(k), &pixels[k * IMAGE_PIXELS..(k + 1) * IMAGE_PIXELS]);
        }
    }
    // the well-known test-set class counts
    let test = load_split(&root, "mnist", Split::Test).unwrap();
    assert_eq!(
        class_histogram(test.labels()),
        [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009]
    );
}

#[test]
fn mnist_encoding_is_antisymmetric_and_bounded() {
    let Some(root) = data_root() else {
        eprintln!("skipping: MNIST not found");
        return;
    };
    let gamma = 500.0;
    let test = load_split(&root, "mnist", Split::Test).unwrap();
    let enc = encode_all(&test, gamma).unwrap();
    let half = IMAGE_PIXELS;
    assert_eq!(enc.inputs.ncols(), 2 * half);
    for row in enc.inputs.rows() {
        for p in 0..half {
            assert_eq!(row[half + p], -row[p]);
            assert!(row[p].abs() <= gamma);
        }
    }
    let epoch: usize = batch_iterator(&test, 7, gamma, 3, 0)
        .unwrap()
        .map(|b| b.unwrap().len())
        .sum();
    assert_eq!(epoch, test.len());
}
