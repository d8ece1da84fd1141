//! Checkpoint file layout:
//!
//! ```text
//! b"FGL1" | u64 LE index length | JSON index | f64 LE tensor data
//! ```
//!
//! The index is `{"dtype": "f64", "meta": {...}, "tensors": [{name, shape,
//! offset, trainable}]}` where `offset` counts bytes from the start of the
//! data section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FGL1";

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorIndex {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    dtype: String,
    meta: serde_json::Value,
    tensors: Vec<TensorIndex>,
}

pub fn encode_checkpoint(store: &ParamStore, meta: &serde_json::Value) -> Vec<u8> {
    let mut offset = 0u64;
    let mut tensors = Vec::with_capacity(store.len());
    for (_, p) in store.iter() {
        tensors.push(TensorIndex {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            offset,
            trainable: p.trainable,
        });
        offset += 8 * p.tensor.len() as u64;
    }
    let index = serde_json::to_vec(&Index {
        dtype: "f64".into(),
        meta: meta.clone(),
        tensors,
    })
    .expect("index serializes");
    let mut out = Vec::with_capacity(12 + index.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.extend_from_slice(&index);
    for (_, p) in store.iter() {
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ParamStore, serde_json::Value)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing FGL1 header"));
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let index_end = 12usize.checked_add(n).ok_or_else(|| bad("index length"))?;
    if bytes.len() < index_end {
        return Err(bad("truncated index"));
    }
    let index: Index =
        serde_json::from_slice(&bytes[12..index_end]).map_err(|e| bad(&e.to_string()))?;
    if index.dtype != "f64" {
        return Err(bad(&format!("unsupported dtype {}", index.dtype)));
    }
    let data = &bytes[index_end..];
    let mut store = ParamStore::new();
    for t in index.tensors {
        let len: usize = t.shape.iter().product();
        let start = t.offset as usize;
        let end = start + 8 * len;
        if end > data.len() {
            return Err(bad(&format!("tensor {} runs past end of file", t.name)));
        }
        let values = data[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.add(t.name, Tensor::new(&t.shape, values)?, t.trainable);
    }
    Ok((store, index.meta))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    store: &ParamStore,
    meta: &serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(store, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamStore, serde_json::Value)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
