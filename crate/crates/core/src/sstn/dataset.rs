//! Greedy action sequences for a whole dataset and the images they produce.
//!
//! On disk: `<stem>.bin` holds, per image in order, a little-endian `u32`
//! length followed by one byte per action; `<stem>.meta` is the TOML sidecar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::data::{ClutteredDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::transform::{apply_sequence, ActionSequence, ApplyMode};

pub const SEQUENCES_VERSION: u32 = 1;
const FORMAT: &str = "stn-sequences";

/// Per-image action sequences aligned with a source dataset. Prefix `t` of
/// image `i` is the source image after the first `t` actions, applied one
/// resampling at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedDataset {
    pub source: String,
    pub split: Split,
    /// Fingerprint of the policy that produced the sequences.
    pub policy_id: String,
    pub steps: usize,
    pub labels: Vec<u8>,
    pub sequences: Vec<ActionSequence>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    source: String,
    split: Split,
    policy_id: String,
    steps: usize,
    count: usize,
    blob_sha256: String,
    labels: Vec<u8>,
}

impl TransformedDataset {
    /// Empty sequences: every prefix is the source image.
    pub fn untransformed(original: &ClutteredDataset) -> Self {
        Self {
            source: original.source.clone(),
            split: original.split,
            policy_id: "none".into(),
            steps: 0,
            labels: original.labels.clone(),
            sequences: vec![ActionSequence::default(); original.len()],
        }
    }

    /// Items in `range`, clamped to the dataset.
    pub fn select(&self, range: std::ops::Range<usize>) -> Self {
        let end = range.end.min(self.len());
        let start = range.start.min(end);
        Self {
            source: self.source.clone(),
            split: self.split,
            policy_id: self.policy_id.clone(),
            steps: self.steps,
            labels: self.labels[start..end].to_vec(),
            sequences: self.sequences[start..end].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequence(&self, i: usize) -> &ActionSequence {
        &self.sequences[i]
    }

    /// Same source, split, length and labels.
    pub fn check_aligned(&self, original: &ClutteredDataset) -> Result<()> {
        if self.source != original.source || self.split != original.split {
            return Err(Error::Composition(format!(
                "sequences were made for {}/{}, dataset is {}/{}",
                self.source,
                self.split.name(),
                original.source,
                original.split.name()
            )));
        }
        if self.len() != original.len() {
            return Err(Error::Composition(format!(
                "{} sequences for {} images",
                self.len(),
                original.len()
            )));
        }
        if let Some(i) = (0..self.len()).find(|&i| self.labels[i] != original.labels[i]) {
            return Err(Error::Composition(format!(
                "label mismatch at {i}: {} vs {}",
                self.labels[i], original.labels[i]
            )));
        }
        Ok(())
    }

    fn check_level(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::Composition(format!("prefix {t} beyond the {} recorded steps", self.steps)));
        }
        Ok(())
    }

    /// Prefix-`t` image of item `i`.
    pub fn prefix_image(&self, original: &ClutteredDataset, i: usize, t: usize) -> Result<Image<f32>> {
        self.check_level(t)?;
        if i >= self.len() || i >= original.len() {
            return Err(Error::Composition(format!("index {i} out of range")));
        }
        Ok(apply_sequence(original.image(i), self.sequences[i].prefix(t), ApplyMode::Stepwise))
    }

    /// Prefix-`t` images of every item.
    pub fn materialize(&self, original: &ClutteredDataset, t: usize) -> Result<Vec<Image<f32>>> {
        self.check_aligned(original)?;
        self.check_level(t)?;
        Ok(original
            .images
            .iter()
            .zip(&self.sequences)
            .map(|(im, s)| apply_sequence(im, s.prefix(t), ApplyMode::Stepwise))
            .collect())
    }

    /// Prefix-`t` level packaged as a dataset, for the on-disk level cache.
    pub fn level_dataset(&self, original: &ClutteredDataset, t: usize) -> Result<ClutteredDataset> {
        Ok(ClutteredDataset {
            source: original.source.clone(),
            split: original.split,
            config: original.config.clone(),
            images: self.materialize(original, t)?,
            labels: original.labels.clone(),
        })
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        if self.labels.len() != self.len() {
            return Err(Error::Export("labels and sequences differ in length".into()));
        }
        let mut bytes = Vec::with_capacity(self.len() * (4 + self.steps));
        for s in &self.sequences {
            let n = u32::try_from(s.len()).map_err(|_| Error::Export("sequence too long".into()))?;
            bytes.extend_from_slice(&n.to_le_bytes());
            bytes.extend(s.to_bytes());
        }
        let side = Sidecar {
            format: FORMAT.into(),
            version: SEQUENCES_VERSION,
            source: self.source.clone(),
            split: self.split,
            policy_id: self.policy_id.clone(),
            steps: self.steps,
            count: self.len(),
            blob_sha256: blob::sha256_hex(&bytes),
            labels: self.labels.clone(),
        };
        let (bin, meta) = blob::stem_paths(stem);
        blob::write_atomic(&bin, &bytes)?;
        blob::write_sidecar(&meta, &side)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (bin, meta) = blob::stem_paths(stem);
        let side: Sidecar = blob::read_sidecar_checked(&meta, FORMAT, SEQUENCES_VERSION)?;
        if side.labels.len() != side.count {
            return Err(Error::Metadata(format!("{} labels for {} sequences", side.labels.len(), side.count)));
        }
        let bytes = blob::read(&bin)?;
        let mut sequences = Vec::with_capacity(side.count);
        let mut pos = 0;
        for i in 0..side.count {
            let head = bytes.get(pos..pos + 4).ok_or(Error::Length { expected: pos + 4, found: bytes.len() })?;
            let n = u32::from_le_bytes(head.try_into().expect("4-byte slice")) as usize;
            pos += 4;
            let body = bytes.get(pos..pos + n).ok_or(Error::Length { expected: pos + n, found: bytes.len() })?;
            let seq = ActionSequence::from_bytes(body)
                .ok_or_else(|| Error::Format(format!("sequence {i} holds an unknown action code")))?;
            if seq.len() != side.steps {
                return Err(Error::Format(format!("sequence {i} has {} actions, expected {}", seq.len(), side.steps)));
            }
            sequences.push(seq);
            pos += n;
        }
        if pos != bytes.len() {
            return Err(Error::Length { expected: pos, found: bytes.len() });
        }
        if blob::sha256_hex(&bytes) != side.blob_sha256 {
            return Err(Error::Metadata("sequence blob checksum mismatch".into()));
        }
        Ok(Self {
            source: side.source,
            split: side.split,
            policy_id: side.policy_id,
            steps: side.steps,
            labels: side.labels,
            sequences,
        })
    }
}
