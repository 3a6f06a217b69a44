//! Binary checkpoint files.
//!
//! Layout: `b"EADL"`, version `u32` LE, metadata length `u32` LE, JSON
//! metadata (config, ordered manifest, optional vocabulary), then every
//! tensor's `f32` values little-endian in manifest order. No padding.

use std::fs;
use std::path::Path;

use eadl_core::encoder::{manifest, CheckpointMeta, ModelCheckpoint, ModelWeights};
use eadl_core::numcore::Tensor;

use crate::error::{FormatError, LabError, LabResult};

pub const MAGIC: &[u8; 4] = b"EADL";
pub const VERSION: u32 = 1;
const HEADER: usize = 12;

pub fn to_bytes(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let meta = serde_json::to_vec(&ckpt.meta()).expect("checkpoint metadata serialises");
    let named = ckpt.weights.named();
    let floats: usize = named.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(HEADER + meta.len() + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for (_, t) in named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses a whole checkpoint image. Nothing is returned unless every check
/// passes.
pub fn from_bytes(bytes: &[u8]) -> Result<ModelCheckpoint, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic(bytes.iter().take(4).copied().collect()));
    }
    if bytes.len() < 8 {
        return Err(FormatError::Truncated { expected: HEADER, found: bytes.len() });
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(FormatError::BadVersion(version));
    }
    if bytes.len() < HEADER {
        return Err(FormatError::Truncated { expected: HEADER, found: bytes.len() });
    }
    let meta_len = read_u32(bytes, 8) as usize;
    let payload_at = HEADER + meta_len;
    if bytes.len() < payload_at {
        return Err(FormatError::Truncated { expected: payload_at, found: bytes.len() });
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(&bytes[HEADER..payload_at]).map_err(|e| FormatError::Metadata(e.to_string()))?;
    meta.config.validate().map_err(|e| FormatError::Metadata(e.to_string()))?;

    let expected = manifest(&meta.config);
    if expected.len() != meta.manifest.len() {
        return Err(FormatError::Manifest(format!(
            "{} entries listed, config implies {}",
            meta.manifest.len(),
            expected.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&meta.manifest) {
        if *name != entry.name || *shape != entry.shape {
            return Err(FormatError::Manifest(format!(
                "entry `{}` {:?}, config implies `{name}` {shape:?}",
                entry.name, entry.shape
            )));
        }
    }

    let floats: usize = meta.manifest.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    let total = payload_at + 4 * floats;
    if bytes.len() < total {
        return Err(FormatError::Truncated { expected: total, found: bytes.len() });
    }
    if bytes.len() > total {
        return Err(FormatError::TrailingBytes(bytes.len() - total));
    }

    let mut at = payload_at;
    let mut tensors = Vec::with_capacity(meta.manifest.len());
    for entry in &meta.manifest {
        let n: usize = entry.shape.iter().product();
        let data: Vec<f32> = bytes[at..at + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        at += 4 * n;
        let t = Tensor::new(&entry.shape, data).map_err(|e| FormatError::Manifest(e.to_string()))?;
        tensors.push((entry.name.clone(), t));
    }
    let weights =
        ModelWeights::from_named(&meta.config, tensors).map_err(|e| FormatError::Manifest(e.to_string()))?;
    Ok(ModelCheckpoint {
        config: meta.config,
        weights,
        vocab: meta.vocab,
    })
}

pub fn save(ckpt: &ModelCheckpoint, path: &Path) -> LabResult<()> {
    ckpt.validate()?;
    fs::write(path, to_bytes(ckpt)).map_err(|e| LabError::io(path, e))
}

pub fn load(path: &Path) -> LabResult<ModelCheckpoint> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    let ckpt = from_bytes(&bytes).map_err(|e| LabError::format(path, e))?;
    ckpt.validate()?;
    Ok(ckpt)
}
