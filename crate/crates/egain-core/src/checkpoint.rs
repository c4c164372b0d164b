//! Checkpoint container: a 4-byte little-endian header length, a JSON
//! header (format version, config snapshot, step counter, tensor
//! directory), then little-endian f32 tensor payloads at the recorded
//! offsets.
//!
//! Serialization is canonical — the tensor directory is name-sorted and the
//! header comes from fixed-order structs — so save -> load -> save
//! reproduces the file byte for byte.

use crate::optim::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::TrainConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const FORMAT_VERSION: &str = "egain-checkpoint-v1";

/// Everything needed to resume inference: parameters, the average latent
/// (stored under the name `wbar` when present), the config, and the step
/// counter.
#[derive(Debug, Clone)]
pub struct CheckpointBundle<T> {
    pub config: TrainConfig,
    pub step: u64,
    pub store: ParamStore<T>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    /// Byte offset into the payload section.
    offset: u64,
    /// Payload byte length.
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: String,
    config: TrainConfig,
    step: u64,
    tensors: Vec<TensorEntry>,
}

impl<T: Scalar> CheckpointBundle<T> {
    pub fn new(config: TrainConfig, step: u64, store: ParamStore<T>) -> Self {
        CheckpointBundle { config, step, store }
    }

    /// The stored average latent, if this bundle carries one.
    pub fn wbar(&self) -> Option<&Tensor<T>> {
        self.store.contains("wbar").then(|| self.store.get("wbar"))
    }

    pub fn cast<U: Scalar>(&self) -> CheckpointBundle<U> {
        CheckpointBundle { config: self.config.clone(), step: self.step, store: self.store.cast() }
    }
}

pub fn save_checkpoint<T: Scalar>(bundle: &CheckpointBundle<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for (name, t) in bundle.store.iter() {
        let offset = payload.len() as u64;
        for v in t.data() {
            payload.extend_from_slice(&v.to_f32().to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: name.to_string(),
            dtype: "f32".into(),
            shape: t.shape().to_vec(),
            offset,
            len: (t.numel() * 4) as u64,
        });
    }
    let header = Header {
        format_version: FORMAT_VERSION.into(),
        config: bundle.config.clone(),
        step: bundle.step,
        tensors,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut file = Vec::with_capacity(4 + header_json.len() + payload.len());
    file.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    file.extend_from_slice(&header_json);
    file.extend_from_slice(&payload);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, file).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<CheckpointBundle<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |m: &str| Error::CheckpointCorrupt(format!("{}: {m}", path.display()));
    if bytes.len() < 4 {
        return Err(corrupt("shorter than the length prefix"));
    }
    let header_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + header_len {
        return Err(corrupt("truncated header"));
    }
    let header_bytes = &bytes[4..4 + header_len];
    // version gate before fully typed parsing, so bumped formats fail with
    // a version error rather than a parse error
    let probe: serde_json::Value = serde_json::from_slice(header_bytes)
        .map_err(|e| corrupt(&format!("header is not JSON: {e}")))?;
    let found = probe
        .get("format_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| corrupt("header has no format_version"))?;
    if found != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: found.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| corrupt(&format!("bad header: {e}")))?;
    let payload = &bytes[4 + header_len..];
    let expected_len: u64 = header.tensors.iter().map(|t| t.offset + t.len).max().unwrap_or(0);
    if payload.len() as u64 != expected_len {
        return Err(corrupt(&format!(
            "payload is {} bytes, directory expects {expected_len}",
            payload.len()
        )));
    }
    let mut store = ParamStore::new();
    for entry in &header.tensors {
        if entry.dtype != "f32" {
            return Err(corrupt(&format!("unsupported dtype {}", entry.dtype)));
        }
        let numel: usize = entry.shape.iter().product();
        if entry.len as usize != numel * 4 {
            return Err(corrupt(&format!("tensor {} length mismatch", entry.name)));
        }
        let start = entry.offset as usize;
        let end = start + entry.len as usize;
        if end > payload.len() {
            return Err(corrupt(&format!("tensor {} exceeds payload", entry.name)));
        }
        let data: Vec<T> = payload[start..end]
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        store.insert(entry.name.clone(), Tensor::new(&entry.shape, data));
    }
    Ok(CheckpointBundle { config: header.config, step: header.step, store })
}
