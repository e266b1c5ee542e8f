//! Shared on-disk convention: a flat little-endian blob `<stem>.bin` next to a
//! human-readable TOML sidecar `<stem>.meta`. Files are written to a
//! temporary name first and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `(<stem>.bin, <stem>.meta)`; a trailing `.bin`/`.meta` on `stem` is ignored.
pub fn stem_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let base = match stem.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("meta") => stem.with_extension(""),
        _ => stem.to_path_buf(),
    };
    let mut bin = base.clone().into_os_string();
    bin.push(".bin");
    let mut meta = base.into_os_string();
    meta.push(".meta");
    (bin.into(), meta.into())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn f32_to_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub fn bytes_to_f32(bytes: &[u8], expected: usize) -> Result<Vec<f32>> {
    if bytes.len() != expected * 4 {
        return Err(Error::Length { expected: expected * 4, found: bytes.len() });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_sidecar<S: Serialize>(path: &Path, meta: &S) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| Error::Metadata(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

/// Parses a sidecar after checking its `format` tag and `version`, so a
/// version mismatch is reported as such even when the schema changed.
pub fn read_sidecar_checked<D: DeserializeOwned>(path: &Path, format: &str, version: u32) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table =
        text.parse().map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))?;
    match table.get("format").and_then(|v| v.as_str()) {
        Some(f) if f == format => {}
        other => {
            return Err(Error::Metadata(format!(
                "{}: expected format `{format}`, found {other:?}",
                path.display()
            )))
        }
    }
    let found = table
        .get("version")
        .and_then(|v| v.as_integer())
        .ok_or_else(|| Error::Metadata(format!("{}: missing version", path.display())))?;
    check_version(u32::try_from(found).unwrap_or(u32::MAX), version)?;
    table
        .try_into()
        .map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))
}

/// Fails with a version error unless `found == supported`.
pub fn check_version(found: u32, supported: u32) -> Result<()> {
    if found != supported {
        return Err(Error::Version { found, supported });
    }
    Ok(())
}
