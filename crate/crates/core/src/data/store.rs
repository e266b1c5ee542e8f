//! Dataset cache: `<stem>.bin` holds `count × height × width` little-endian
//! f32 pixels row-major; `<stem>.meta` is a TOML sidecar with the shape,
//! labels, synthesis config (including the seed) and the format version.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::data::{ClutterConfig, ClutteredDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;

pub const DATASET_VERSION: u32 = 1;
const FORMAT: &str = "stn-cluttered";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    source: String,
    split: Split,
    count: usize,
    height: usize,
    width: usize,
    blob_sha256: String,
    labels: Vec<u8>,
    config: ClutterConfig,
}

pub fn save_dataset(ds: &ClutteredDataset, stem: &Path) -> Result<()> {
    let (bin, side) = blob::stem_paths(stem);
    let (h, w) = ds.images.first().map_or((0, 0), |im| (im.height(), im.width()));
    if ds.images.iter().any(|im| im.height() != h || im.width() != w) {
        return Err(Error::Dimension("dataset images differ in size".into()));
    }
    let bytes = blob::f32_to_bytes(ds.images.iter().flat_map(|im| im.pixels().iter().copied()));
    let meta = Sidecar {
        format: FORMAT.into(),
        version: DATASET_VERSION,
        source: ds.source.clone(),
        split: ds.split,
        count: ds.len(),
        height: h,
        width: w,
        blob_sha256: blob::sha256_hex(&bytes),
        labels: ds.labels.clone(),
        config: ds.config.clone(),
    };
    blob::write_atomic(&bin, &bytes)?;
    blob::write_sidecar(&side, &meta)
}

pub fn load_dataset(stem: &Path) -> Result<ClutteredDataset> {
    let (bin, side) = blob::stem_paths(stem);
    let meta: Sidecar = blob::read_sidecar_checked(&side, FORMAT, DATASET_VERSION)?;
    if meta.labels.len() != meta.count {
        return Err(Error::Metadata(format!(
            "sidecar lists {} labels for {} images",
            meta.labels.len(),
            meta.count
        )));
    }
    let bytes = blob::read(&bin)?;
    let plane = meta.height * meta.width;
    let values = blob::bytes_to_f32(&bytes, meta.count * plane)?;
    if blob::sha256_hex(&bytes) != meta.blob_sha256 {
        return Err(Error::Metadata("dataset blob checksum mismatch".into()));
    }
    let images = if plane == 0 {
        vec![Image::zeros(meta.width, meta.height); meta.count]
    } else {
        values
            .chunks_exact(plane)
            .map(|c| Image::from_vec(meta.width, meta.height, c.to_vec()).expect("plane size"))
            .collect()
    };
    Ok(ClutteredDataset {
        source: meta.source,
        split: meta.split,
        config: meta.config,
        images,
        labels: meta.labels,
    })
}
