//! Datasets: MNIST IDX parsing, synthetic Gaussian blobs and client partitioning.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, IdxError, Result};

pub const MNIST_FEATURES: usize = 784;
pub const MNIST_CLASSES: usize = 10;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: usize,
    classes: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: usize, classes: usize, values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if features == 0 || classes == 0 || classes > 256 {
            return Err(contract("dataset needs at least one feature and 1..=256 classes"));
        }
        if values.len() != features * labels.len() {
            return Err(contract(format!(
                "{} feature values do not form {} rows of {features}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| usize::from(l) >= classes) {
            return Err(contract(format!("label {} at row {pos} out of range", labels[pos])));
        }
        Ok(Self {
            features,
            classes,
            values,
            labels,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> usize {
        usize::from(self.labels[i])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(rows.len() * self.features);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Dataset {
            features: self.features,
            classes: self.classes,
            values,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Parses an IDX3 image file: returns `(count, rows * cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<(usize, usize, &[u8]), IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let pixels = read_u32(bytes, 8)? as usize * read_u32(bytes, 12)? as usize;
    let payload = &bytes[16..];
    let expected = count * pixels;
    if payload.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok((count, pixels, &payload[..expected]))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<&[u8], IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(IdxError::Truncated {
            expected: count,
            found: payload.len(),
        });
    }
    let labels = &payload[..count];
    if let Some(index) = labels.iter().position(|&l| usize::from(l) >= MNIST_CLASSES) {
        return Err(IdxError::LabelOutOfRange {
            index,
            label: labels[index],
        });
    }
    Ok(labels)
}

/// Builds a dataset from raw IDX bytes; pixels are scaled to `[0, 1]`.
pub fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (count, pixels, raw) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: labels.len(),
        }
        .into());
    }
    let values = raw.iter().map(|&p| f64::from(p) / 255.0).collect();
    Dataset::new(pixels, MNIST_CLASSES, values, labels.to_vec())
}

pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    mnist_from_bytes(&images, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads a split from a directory holding the standard uncompressed file names.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let dir = dir.as_ref();
    load_mnist(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionScheme {
    /// Seeded shuffle, then contiguous equal-size chunks.
    #[default]
    Iid,
    /// Rows sorted by label (shuffled within a label), then contiguous chunks.
    LabelSorted,
}

pub fn partition(data: &Dataset, clients: usize, seed: u64) -> Result<Vec<Dataset>> {
    partition_with(data, clients, seed, PartitionScheme::Iid)
}

/// Splits `data` into `clients` disjoint parts whose sizes differ by at most one.
pub fn partition_with(data: &Dataset, clients: usize, seed: u64, scheme: PartitionScheme) -> Result<Vec<Dataset>> {
    if clients == 0 || clients > data.len() {
        return Err(contract(format!(
            "cannot split {} samples across {clients} clients",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if scheme == PartitionScheme::LabelSorted {
        order.sort_by_key(|&i| data.labels[i]);
    }
    let base = data.len() / clients;
    let extra = data.len() % clients;
    let mut start = 0;
    Ok((0..clients)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let part = data.subset(&order[start..start + len]);
            start += len;
            part
        })
        .collect())
}

/// Gaussian class-conditional blobs. Class centres are uniform in `[0, 1]`
/// per feature, samples add unit-variance noise; labels cycle through the
/// classes so every class is equally represented.
pub fn synthetic_dataset(n: usize, features: usize, classes: usize, seed: u64) -> Result<Dataset> {
    if classes == 0 || classes > 256 || features == 0 {
        return Err(contract("synthetic data needs features >= 1 and 1..=256 classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<f64> = (0..classes * features).map(|_| rng.random::<f64>()).collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let centre = &centres[c * features..(c + 1) * features];
        values.extend(centre.iter().map(|m| m + noise.sample(&mut rng)));
        labels.push(c as u8);
    }
    Dataset::new(features, classes, values, labels)
}

/// Train/test pair drawn from the same blobs.
pub fn synthetic_split(
    train: usize,
    test: usize,
    features: usize,
    classes: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let all = synthetic_dataset(train + test, features, classes, seed)?;
    let rows: Vec<usize> = (0..all.len()).collect();
    Ok((all.subset(&rows[..train]), all.subset(&rows[train..])))
}
