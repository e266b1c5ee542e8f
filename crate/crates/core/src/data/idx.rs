//! IDX reader (the MNIST distribution format): big-endian u32 magic, one u32
//! per dimension, then raw u8 payload.

use std::path::Path;

use crate::blob;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdxKind {
    Images,
    Labels,
}

/// Decoded IDX payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdxPart {
    Images { count: usize, rows: usize, cols: usize, pixels: Vec<u8> },
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Length { expected: at + 4, found: bytes.len() })
}

pub fn parse_idx(bytes: &[u8], kind: IdxKind) -> Result<IdxPart> {
    let magic = be_u32(bytes, 0)?;
    let (want, ndims) = match kind {
        IdxKind::Images => (IMAGES_MAGIC, 3),
        IdxKind::Labels => (LABELS_MAGIC, 1),
    };
    if magic != want {
        return Err(Error::Format(format!("bad IDX magic {magic:#010x}, expected {want:#010x}")));
    }
    let dims = (0..ndims)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let payload = dims.iter().product::<usize>();
    if bytes.len() != header + payload {
        return Err(Error::Length { expected: header + payload, found: bytes.len() });
    }
    let body = bytes[header..].to_vec();
    Ok(match kind {
        IdxKind::Images => IdxPart::Images { count: dims[0], rows: dims[1], cols: dims[2], pixels: body },
        IdxKind::Labels => IdxPart::Labels(body),
    })
}

pub fn load_idx(path: &Path, kind: IdxKind) -> Result<IdxPart> {
    parse_idx(&blob::read(path)?, kind)
}

/// Encodes an IDX file (used for fixtures and conversions).
pub fn encode_idx(part: &IdxPart) -> Vec<u8> {
    let mut out = Vec::new();
    match part {
        IdxPart::Images { count, rows, cols, pixels } => {
            out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
            for d in [count, rows, cols] {
                out.extend_from_slice(&(*d as u32).to_be_bytes());
            }
            out.extend_from_slice(pixels);
        }
        IdxPart::Labels(labels) => {
            out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
            out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
            out.extend_from_slice(labels);
        }
    }
    out
}
