//! Checkpoint container: an 8-byte magic, a little-endian u64 manifest
//! length, a JSON manifest (config, K, tensor names/shapes/offsets), then
//! every tensor as little-endian f64 in manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EncoderModel, EncoderParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"OICKPT01";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: EncoderConfig,
    num_known: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in f64 values from the start of the data section.
    offset: usize,
}

pub fn save_checkpoint(model: &EncoderModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut offset = 0;
    let mut entries = Vec::new();
    for t in model.params().tensors() {
        let shape = t.tensor.shape_vec();
        entries.push(TensorEntry {
            name: t.name,
            shape,
            offset,
        });
        offset += t.tensor.values().len();
    }
    let manifest = Manifest {
        config: model.config().clone(),
        num_known: model.num_known(),
        tensors: entries,
    };
    let manifest = serde_json::to_vec(&manifest)?;

    let mut buf = Vec::with_capacity(16 + manifest.len() + offset * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    buf.extend_from_slice(&manifest);
    for t in model.params().tensors() {
        for v in t.tensor.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(&buf).map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize
        .checked_add(len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[16..data_start])?;
    let data = &bytes[data_start..];
    if data.len() % 8 != 0 {
        return Err(bad("data section is not a whole number of f64 values"));
    }

    let mut params = EncoderParams::zeros(&manifest.config, manifest.num_known);
    let mut tensors = params.tensors_mut();
    if tensors.len() != manifest.tensors.len() {
        return Err(bad("tensor count does not match the configuration"));
    }
    for (t, entry) in tensors.iter_mut().zip(&manifest.tensors) {
        if t.name != entry.name || t.tensor.shape_vec() != entry.shape {
            return Err(Error::Checkpoint(format!(
                "{}: tensor {} {:?} does not match expected {} {:?}",
                path.display(),
                entry.name,
                entry.shape,
                t.name,
                t.tensor.shape_vec()
            )));
        }
        let dst = t.tensor.values_mut();
        let start = entry.offset * 8;
        let end = start + dst.len() * 8;
        let src = data.get(start..end).ok_or_else(|| bad("truncated tensor data"))?;
        for (v, chunk) in dst.iter_mut().zip(src.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    drop(tensors);
    EncoderModel::from_parts(manifest.config, manifest.num_known, params)
}
