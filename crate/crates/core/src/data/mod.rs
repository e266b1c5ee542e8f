//! Raw MNIST-format ingestion, cluttered-canvas synthesis and dataset caches.

mod clutter;
mod idx;
mod store;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub use clutter::{synthesize_cluttered, ClutterConfig};
pub use idx::{encode_idx, load_idx, parse_idx, IdxKind, IdxPart, IMAGES_MAGIC, LABELS_MAGIC};
pub use store::{load_dataset, save_dataset, DATASET_VERSION};

pub const NUM_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// File prefix used by the MNIST distribution (`train-…`, `t10k-…`).
    pub fn idx_prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" | "t10k" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

/// 28×28 u8 digits (or garments) with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
    pub split: Split,
}

impl RawDataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if pixels.len() != labels.len() * rows * cols {
            return Err(Error::Dimension(format!(
                "{} pixels do not match {} labels of {rows}×{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Domain(format!("label {bad} outside [0, 9]")));
        }
        Ok(Self { rows, cols, pixels, labels, split })
    }

    pub fn from_parts(images: IdxPart, labels: IdxPart, split: Split) -> Result<Self> {
        match (images, labels) {
            (IdxPart::Images { count, rows, cols, pixels }, IdxPart::Labels(labels)) => {
                if count != labels.len() {
                    return Err(Error::Dimension(format!(
                        "{count} images but {} labels",
                        labels.len()
                    )));
                }
                Self::new(rows, cols, pixels, labels, split)
            }
            _ => Err(Error::Format("expected an images part and a labels part".into())),
        }
    }

    /// Loads `<dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte`.
    pub fn load(dir: &Path, split: Split) -> Result<Self> {
        let p = split.idx_prefix();
        let images = load_idx(&dir.join(format!("{p}-images-idx3-ubyte")), IdxKind::Images)?;
        let labels = load_idx(&dir.join(format!("{p}-labels-idx1-ubyte")), IdxKind::Labels)?;
        Self::from_parts(images, labels, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn raw_image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Pixel bytes mapped to `[0, 1]` by dividing by 255.
    pub fn image(&self, i: usize) -> Image<f32> {
        let data = self.raw_image(i).iter().map(|&b| b as f32 / 255.0).collect();
        Image::from_vec(self.cols, self.rows, data).expect("raw image dims")
    }

    /// First `n` items.
    pub fn truncate(&self, n: usize) -> Self {
        self.select(0..n)
    }

    /// Items in `range`, clamped to the dataset.
    pub fn select(&self, range: std::ops::Range<usize>) -> Self {
        let end = range.end.min(self.len());
        let start = range.start.min(end);
        let n = self.rows * self.cols;
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[start * n..end * n].to_vec(),
            labels: self.labels[start..end].to_vec(),
            split: self.split,
        }
    }
}

/// Canvas-sized images with labels aligned to their source items.
#[derive(Clone, Debug, PartialEq)]
pub struct ClutteredDataset {
    /// Short id of the source collection, e.g. `mnist` or `fashion`.
    pub source: String,
    pub split: Split,
    pub config: ClutterConfig,
    pub images: Vec<Image<f32>>,
    pub labels: Vec<u8>,
}

impl ClutteredDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &Image<f32> {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn canvas_size(&self) -> usize {
        self.images.first().map_or(self.config.canvas_size, |im| im.width())
    }

    /// First `n` items.
    pub fn truncate(&self, n: usize) -> Self {
        self.select(0..n)
    }

    /// Items in `range`, clamped to the dataset.
    pub fn select(&self, range: std::ops::Range<usize>) -> Self {
        let end = range.end.min(self.len());
        let start = range.start.min(end);
        Self {
            source: self.source.clone(),
            split: self.split,
            config: self.config.clone(),
            images: self.images[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }
}
