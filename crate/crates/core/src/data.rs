//! IDX image datasets and their encoding into clamped input voltages.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{domain, substream};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Images with intensities in `[0, 1]` and their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    /// Raw bytes, `count * IMAGE_PIXELS`, row-major per image.
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * IMAGE_PIXELS {
            return Err(Error::DimensionMismatch(format!(
                "{} pixel bytes for {} labels",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn raw_image(&self, k: usize) -> &[u8] {
        &self.pixels[k * IMAGE_PIXELS..(k + 1) * IMAGE_PIXELS]
    }

    /// Pixel intensity of image `k`, normalized by 255.
    pub fn pixel(&self, k: usize, p: usize) -> f64 {
        f64::from(self.raw_image(k)[p]) / 255.0
    }

    /// Normalized images as a `count x 784` matrix.
    pub fn images(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), IMAGE_PIXELS), |(k, p)| self.pixel(k, p))
    }

    /// The first `n` examples (or all, if fewer).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            name: self.name.clone(),
            pixels: self.pixels[..n * IMAGE_PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::Truncated {
            what,
            needed: at + 4,
            available: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &'static str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX3 image file: magic `0x803`, then `n, 28, 28`, then bytes.
/// Returns `(n, pixel bytes)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, &[u8])> {
    check_magic(bytes, IMAGES_MAGIC, "IDX image header")?;
    let n = be_u32(bytes, 4, "IDX image header")? as usize;
    let rows = be_u32(bytes, 8, "IDX image header")? as usize;
    let cols = be_u32(bytes, 12, "IDX image header")? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::DimensionMismatch(format!(
            "images are {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}"
        )));
    }
    let needed = n
        .checked_mul(IMAGE_PIXELS)
        .and_then(|p| p.checked_add(16))
        .ok_or_else(|| Error::DimensionMismatch(format!("image count {n} overflows")))?;
    check_length(bytes.len(), needed, "IDX image data")?;
    Ok((n, &bytes[16..]))
}

/// Parses an IDX1 label file: magic `0x801`, then `n`, then bytes.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    check_magic(bytes, LABELS_MAGIC, "IDX label header")?;
    let n = be_u32(bytes, 4, "IDX label header")? as usize;
    let needed = n
        .checked_add(8)
        .ok_or_else(|| Error::DimensionMismatch(format!("label count {n} overflows")))?;
    check_length(bytes.len(), needed, "IDX label data")?;
    Ok(&bytes[8..])
}

fn check_length(available: usize, needed: usize, what: &'static str) -> Result<()> {
    if available < needed {
        return Err(Error::Truncated {
            what,
            needed,
            available,
        });
    }
    if available > needed {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {} trailing bytes",
            available - needed
        )));
    }
    Ok(())
}

/// Parses an image file and a label file that must agree in count, with
/// every label in `0..10`.
pub fn parse_idx_pair(name: &str, images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let (n, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| usize::from(l) >= NUM_CLASSES) {
        return Err(Error::LabelOutOfRange { index, label });
    }
    LabeledDataset::new(name, pixels.to_vec(), labels.to_vec())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let name = images_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_idx_pair(&name, &images, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads `<root>/<dataset>/{train,t10k}-{images-idx3,labels-idx1}-ubyte`.
pub fn load_split(root: &Path, dataset: &str, split: Split) -> Result<LabeledDataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let dir = root.join(dataset);
    let mut ds = load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )?;
    ds.name = dataset.to_string();
    Ok(ds)
}

/// Dataset root from `EPROP_DATA_DIR`, if set.
pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os("EPROP_DATA_DIR").map(PathBuf::from)
}

/// Clamped input voltages and one-hot targets.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    /// `(batch, 2 * 784)`: `gamma * x` then `-gamma * x`.
    pub inputs: Array2<f64>,
    /// `(batch, 10)` one-hot.
    pub targets: Array2<f64>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// Encodes the examples at `indices`.
pub fn encode_batch(dataset: &LabeledDataset, indices: &[usize], gamma: f64) -> Result<EncodedBatch> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let mut inputs = Array2::zeros((indices.len(), 2 * IMAGE_PIXELS));
    let mut targets = Array2::zeros((indices.len(), NUM_CLASSES));
    for (row, &k) in indices.iter().enumerate() {
        let label = dataset.labels[k];
        if usize::from(label) >= NUM_CLASSES {
            return Err(Error::LabelOutOfRange { index: k, label });
        }
        targets[(row, usize::from(label))] = 1.0;
        let mut r = inputs.row_mut(row);
        for (p, &b) in dataset.raw_image(k).iter().enumerate() {
            let v = gamma * (f64::from(b) / 255.0);
            r[p] = v;
            r[IMAGE_PIXELS + p] = -v;
        }
    }
    Ok(EncodedBatch { inputs, targets })
}

/// Encodes a whole dataset in one go (evaluation).
pub fn encode_all(dataset: &LabeledDataset, gamma: f64) -> Result<EncodedBatch> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    encode_batch(dataset, &all, gamma)
}

/// Example order for one epoch, shuffled by `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut substream(seed, &[domain::SHUFFLE, epoch]));
    order
}

/// Mini-batches of one epoch; the last batch may be short.
pub struct BatchIterator<'a> {
    dataset: &'a LabeledDataset,
    order: Vec<usize>,
    batch_size: usize,
    gamma: f64,
    pos: usize,
}

pub fn batch_iterator(
    dataset: &LabeledDataset,
    batch_size: usize,
    gamma: f64,
    seed: u64,
    epoch: u64,
) -> Result<BatchIterator<'_>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(BatchIterator {
        dataset,
        order: epoch_order(dataset.len(), seed, epoch),
        batch_size,
        gamma,
        pos: 0,
    })
}

impl BatchIterator<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = Result<EncodedBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = encode_batch(self.dataset, &self.order[self.pos..end], self.gamma);
        self.pos = end;
        Some(batch)
    }
}

/// Endless stream of batches across epochs `0, 1, 2, ...`. Labels are
/// validated up front, so items cannot fail.
pub struct EpochStream<'a> {
    dataset: &'a LabeledDataset,
    batch_size: usize,
    gamma: f64,
    seed: u64,
    epoch: u64,
    current: BatchIterator<'a>,
}

impl<'a> EpochStream<'a> {
    pub fn new(dataset: &'a LabeledDataset, batch_size: usize, gamma: f64, seed: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument("cannot stream an empty dataset".into()));
        }
        if let Some((index, &label)) = dataset
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| usize::from(l) >= NUM_CLASSES)
        {
            return Err(Error::LabelOutOfRange { index, label });
        }
        let current = batch_iterator(dataset, batch_size, gamma, seed, 0)?;
        Ok(Self {
            dataset,
            batch_size,
            gamma,
            seed,
            epoch: 0,
            current,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

impl Iterator for EpochStream<'_> {
    type Item = EncodedBatch;

    fn next(&mut self) -> Option<EncodedBatch> {
        loop {
            if let Some(batch) = self.current.next() {
                return Some(batch.expect("labels validated and gamma checked"));
            }
            self.epoch += 1;
            self.current = batch_iterator(self.dataset, self.batch_size, self.gamma, self.seed, self.epoch)
                .expect("arguments validated");
        }
    }
}

/// Column-wise class counts of a label slice.
pub fn class_histogram(labels: &[u8]) -> [usize; NUM_CLASSES] {
    let mut h = [0; NUM_CLASSES];
    for &l in labels {
        if let Some(slot) = h.get_mut(usize::from(l)) {
            *slot += 1;
        }
    }
    h
}

/// Antisymmetry check used by tests and the acceptance suite: second half of
/// every row is the exact negation of the first, and every magnitude is at
/// most `gamma`.
pub fn check_encoding(batch: &EncodedBatch, gamma: f64) -> bool {
    let half = batch.inputs.ncols() / 2;
    batch.inputs.axis_iter(Axis(0)).all(|row| {
        (0..half).all(|p| row[half + p] == -row[p] && row[p].abs() <= gamma)
    })
}
