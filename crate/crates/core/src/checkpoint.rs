//! Checkpoint container: magic, u64 manifest length, JSON manifest, then
//! little-endian f64 payloads addressed by byte offset.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Parameters, Tensor};
use crate::trainer::{AdamConfig, OptimState};

const MAGIC: &[u8; 8] = b"UNMTCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub step: u64,
    pub adam: AdamConfig,
    pub tensors: Vec<TensorEntry>,
    pub frozen: Vec<String>,
    pub first_moments: Vec<TensorEntry>,
    pub second_moments: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub opt: OptimState,
    pub vocab_hash: String,
}

impl Checkpoint {
    pub fn step(&self) -> u64 {
        self.opt.step
    }
}

fn push_tensors<'a>(
    items: impl Iterator<Item = (&'a str, &'a Tensor)>,
    payload: &mut Vec<u8>,
) -> Vec<TensorEntry> {
    items
        .map(|(name, t)| {
            let offset = payload.len() as u64;
            for x in t.iter() {
                payload.extend_from_slice(&x.to_le_bytes());
            }
            TensorEntry { name: name.to_owned(), dtype: "f64".into(), shape: t.shape().to_vec(), offset }
        })
        .collect()
}

pub fn to_bytes(model: &Model, opt: &OptimState, vocab_hash: &str) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let tensors = push_tensors(model.params.iter(), &mut payload);
    let first_moments = push_tensors(opt.first.iter().map(|(k, v)| (k.as_str(), v)), &mut payload);
    let second_moments = push_tensors(opt.second.iter().map(|(k, v)| (k.as_str(), v)), &mut payload);
    let manifest = Manifest {
        version: VERSION,
        config: model.config.clone(),
        vocab_hash: vocab_hash.to_owned(),
        step: opt.step,
        adam: opt.config.clone(),
        tensors,
        frozen: model.params.frozen().iter().cloned().collect(),
        first_moments,
        second_moments,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn read_tensor(entry: &TensorEntry, payload: &[u8]) -> Result<Tensor> {
    if entry.dtype != "f64" {
        return Err(Error::format("checkpoint", format!("unsupported dtype {} for {}", entry.dtype, entry.name)));
    }
    let n: usize = entry.shape.iter().product();
    let start = entry.offset as usize;
    let end = start + 8 * n;
    let bytes = payload
        .get(start..end)
        .ok_or_else(|| Error::format("checkpoint", format!("truncated payload for {}", entry.name)))?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    ArrayD::from_shape_vec(IxDyn(&entry.shape), data)
        .map_err(|e| Error::format("checkpoint", format!("{}: {e}", entry.name)))
}

fn read_map(entries: &[TensorEntry], payload: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    entries.iter().map(|e| Ok((e.name.clone(), read_tensor(e, payload)?))).collect()
}

/// Parses a checkpoint. With `expected_vocab` set, a different vocabulary
/// hash is a `VocabularyDrift` error.
pub fn from_bytes(bytes: &[u8], expected_vocab: Option<&str>) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format("checkpoint", "missing header".to_owned()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::format("checkpoint", "truncated manifest".to_owned()))?;
    let manifest: Manifest = serde_json::from_slice(json)?;
    if manifest.version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {}", manifest.version)));
    }
    if let Some(expected) = expected_vocab {
        if expected != manifest.vocab_hash {
            return Err(Error::VocabularyDrift { expected: expected.to_owned(), got: manifest.vocab_hash });
        }
    }
    let payload = &bytes[16 + len..];
    let expected_len: usize = [&manifest.tensors, &manifest.first_moments, &manifest.second_moments]
        .iter()
        .flat_map(|v| v.iter())
        .map(|e| 8 * e.shape.iter().product::<usize>())
        .sum();
    if payload.len() != expected_len {
        return Err(Error::format(
            "checkpoint",
            format!("payload is {} bytes, manifest describes {expected_len}", payload.len()),
        ));
    }
    let mut params = Parameters::default();
    for (name, t) in read_map(&manifest.tensors, payload)? {
        params.insert(name, t);
    }
    for name in &manifest.frozen {
        params.freeze(name)?;
    }
    let model = Model { config: manifest.config, params };
    model.config.validate()?;
    let opt = OptimState {
        config: manifest.adam,
        step: manifest.step,
        first: read_map(&manifest.first_moments, payload)?,
        second: read_map(&manifest.second_moments, payload)?,
    };
    Ok(Checkpoint { model, opt, vocab_hash: manifest.vocab_hash })
}

pub fn save(path: &Path, model: &Model, opt: &OptimState, vocab_hash: &str) -> Result<()> {
    fs::write(path, to_bytes(model, opt, vocab_hash)?)?;
    Ok(())
}

pub fn load(path: &Path, expected_vocab: Option<&str>) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?, expected_vocab)
}
