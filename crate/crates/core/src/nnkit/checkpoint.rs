//! Named-tensor checkpoints in the blob + sidecar layout.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};
use crate::nnkit::model::Parameterized;
use crate::nnkit::tensor::Tensor;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "stn-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the blob, in f32 elements.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    blob_sha256: String,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

/// Tensors loaded from disk plus free-form metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub tensors: Vec<(String, Tensor<T>)>,
    pub meta: BTreeMap<String, String>,
}

/// Stores tensors as f32 regardless of `T`.
pub fn save_tensors<T: Scalar>(
    stem: &Path,
    tensors: &[(String, &Tensor<T>)],
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let (bin, side) = blob::stem_paths(stem);
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset });
        offset += t.len();
    }
    let bytes = blob::f32_to_bytes(
        tensors.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_f64_lossy() as f32)),
    );
    let sidecar = Sidecar {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        blob_sha256: blob::sha256_hex(&bytes),
        meta: meta.clone(),
        tensors: entries,
    };
    blob::write_atomic(&bin, &bytes)?;
    blob::write_sidecar(&side, &sidecar)
}

pub fn load_tensors<T: Scalar>(stem: &Path) -> Result<Checkpoint<T>> {
    let (bin, side) = blob::stem_paths(stem);
    let sidecar: Sidecar = blob::read_sidecar_checked(&side, FORMAT, CHECKPOINT_VERSION)?;
    let bytes = blob::read(&bin)?;
    let total: usize = sidecar.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    let values = blob::bytes_to_f32(&bytes, total)?;
    if blob::sha256_hex(&bytes) != sidecar.blob_sha256 {
        return Err(Error::Metadata("checkpoint blob checksum mismatch".into()));
    }
    let mut tensors = Vec::with_capacity(sidecar.tensors.len());
    for e in sidecar.tensors {
        let n: usize = e.shape.iter().product();
        let slice = values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| Error::Metadata(format!("tensor `{}` out of range", e.name)))?;
        let t = Tensor::new(&e.shape, slice.iter().map(|&v| T::lit(v as f64)).collect())?;
        tensors.push((e.name, t));
    }
    Ok(Checkpoint { tensors, meta: sidecar.meta })
}

/// Saves every parameter of `model` under its name.
pub fn save_params<T: Scalar, M: Parameterized<T> + ?Sized>(
    model: &M,
    stem: &Path,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let named = model.params();
    let tensors: Vec<(String, &Tensor<T>)> = named.iter().map(|(n, p)| (n.clone(), &p.value)).collect();
    save_tensors(stem, &tensors, meta)
}

/// Loads values into an already-built model; names and shapes must match.
pub fn load_params<T: Scalar, M: Parameterized<T> + ?Sized>(
    model: &mut M,
    stem: &Path,
) -> Result<BTreeMap<String, String>> {
    let ckpt = load_tensors::<T>(stem)?;
    assign_params(model, ckpt.tensors)?;
    Ok(ckpt.meta)
}

pub fn assign_params<T: Scalar, M: Parameterized<T> + ?Sized>(
    model: &mut M,
    tensors: Vec<(String, Tensor<T>)>,
) -> Result<()> {
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    if names.len() != tensors.len() {
        return Err(Error::Metadata(format!(
            "checkpoint holds {} tensors, model has {}",
            tensors.len(),
            names.len()
        )));
    }
    for (name, (cname, _)) in names.iter().zip(&tensors) {
        if name != cname {
            return Err(Error::Metadata(format!("expected tensor `{name}`, found `{cname}`")));
        }
    }
    for (p, (_, t)) in model.params_mut().into_iter().zip(tensors) {
        t.expect_shape(p.shape())?;
        p.value = t;
    }
    Ok(())
}
