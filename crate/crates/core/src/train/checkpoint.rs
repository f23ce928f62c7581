//! Binary checkpoint: `TSACKPT` magic, one version byte, a little-endian u32
//! header length, a JSON header (variant, encoder config, vocabulary and the
//! parameter manifest), then every parameter value as little-endian f64 in
//! manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EncoderConfig;
use crate::model::{Model, ModelVariant};
use crate::scalar::Scalar;
use crate::tokenizer::Vocabulary;

const MAGIC: &[u8; 7] = b"TSACKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    variant: ModelVariant,
    encoder: EncoderConfig,
    vocab: Vec<String>,
    params: Vec<ParamEntry>,
}

pub fn write_checkpoint<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let named = model.named_params();
    let header = Header {
        variant: model.variant,
        encoder: model.config.clone(),
        vocab: model.vocab.tokens().to_vec(),
        params: named
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let n_values: usize = named.iter().map(|p| p.tensor.len()).sum();
    let mut out = Vec::with_capacity(MAGIC.len() + 5 + json.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &named {
        for v in p.tensor.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Model<T>, CheckpointError> {
    let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
    if bytes.len() < MAGIC.len() + 5 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing magic"));
    }
    let version = bytes[MAGIC.len()];
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let at = MAGIC.len() + 1;
    let header_len = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let body = &bytes[at + 4..];
    if body.len() < header_len {
        return Err(corrupt("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let payload = &body[header_len..];

    let vocab = Vocabulary::from_tokens(header.vocab).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let mut model = Model::<T>::build(header.variant, header.encoder, vocab)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    {
        let named = model.named_params();
        if named.len() != header.params.len() {
            return Err(corrupt("parameter count differs from the architecture"));
        }
        for (p, entry) in named.iter().zip(&header.params) {
            if p.name != entry.name || p.tensor.shape() != entry.shape.as_slice() {
                return Err(CheckpointError::Corrupt(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    entry.name,
                    entry.shape,
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
    }
    let expected: usize = model.num_parameters() * 8;
    if payload.len() != expected {
        return Err(CheckpointError::Corrupt(format!(
            "payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))));
    for t in model.tensors_mut() {
        for slot in t.data_mut() {
            *slot = values.next().expect("length checked");
        }
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&write_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>, CheckpointError> {
    read_checkpoint(&fs::read(path)?)
}
