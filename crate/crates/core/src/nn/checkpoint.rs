//! Checkpoint container.
//!
//! Layout: 8-byte magic `VFGCKPT1`, a little-endian `u64` header length,
//! a JSON header, then every tensor's elements in row-major order as
//! little-endian floats. The header records the model config, both
//! vocabularies (TSV text plus sha256), and one
//! `{name, shape, dtype, offset, len}` entry per tensor, offsets relative
//! to the start of the data section.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Model, ModelConfig, Params, Real};
use crate::text::{hex_digest, TextError, Vocabulary};
use crate::write_atomic;

const MAGIC: &[u8; 8] = b"VFGCKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("bad checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("tensor {name}: {message}")]
    Tensor { name: String, message: String },
    #[error("checkpoint model mismatch: {0}")]
    Model(String),
    #[error("bad vocabulary in checkpoint: {0}")]
    Vocab(#[from] TextError),
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    dtype: String,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    ir_vocab: String,
    ir_vocab_sha256: String,
    query_vocab: String,
    query_vocab_sha256: String,
    tensors: Vec<TensorEntry>,
}

/// A trained model together with the vocabularies it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T = f32> {
    pub model: Model<T>,
    pub ir_vocab: Vocabulary,
    pub query_vocab: Vocabulary,
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut data = Vec::new();
        let mut tensors = Vec::new();
        for (name, t) in self.model.params.names.iter().zip(&self.model.params.tensors) {
            let offset = data.len();
            for &x in t.iter() {
                x.write_le(&mut data);
            }
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: [t.nrows(), t.ncols()],
                dtype: T::DTYPE.to_string(),
                offset,
                len: data.len() - offset,
            });
        }
        let header = Header {
            config: self.model.config.clone(),
            ir_vocab: self.ir_vocab.to_tsv(),
            ir_vocab_sha256: self.ir_vocab.digest(),
            query_vocab: self.query_vocab.to_tsv(),
            query_vocab_sha256: self.query_vocab.digest(),
            tensors,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 16 {
            return Err(CheckpointError::Truncated);
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let data_start = 16usize.checked_add(hlen).ok_or(CheckpointError::Truncated)?;
        if bytes.len() < data_start {
            return Err(CheckpointError::Truncated);
        }
        let header: Header = serde_json::from_slice(&bytes[16..data_start])?;
        let data = &bytes[data_start..];
        let mut params = Params::default();
        for e in &header.tensors {
            let bad = |message: &str| CheckpointError::Tensor {
                name: e.name.clone(),
                message: message.to_string(),
            };
            if e.dtype != T::DTYPE {
                return Err(bad(&format!("dtype {} where {} expected", e.dtype, T::DTYPE)));
            }
            let count = e.shape[0] * e.shape[1];
            if e.len != count * T::BYTES {
                return Err(bad("length does not match shape"));
            }
            let raw = data
                .get(e.offset..e.offset + e.len)
                .ok_or(CheckpointError::Truncated)?;
            let values: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            let t = Array2::from_shape_vec((e.shape[0], e.shape[1]), values)
                .map_err(|err| bad(&err.to_string()))?;
            params.push(e.name.clone(), t);
        }
        let ir_vocab = Vocabulary::from_tsv(&header.ir_vocab)?;
        let query_vocab = Vocabulary::from_tsv(&header.query_vocab)?;
        if ir_vocab.digest() != header.ir_vocab_sha256 || query_vocab.digest() != header.query_vocab_sha256 {
            return Err(CheckpointError::Model("vocabulary hash mismatch".into()));
        }
        let model = Model::from_params(header.config, params).map_err(CheckpointError::Model)?;
        if model.params.tensors[model.params.index_of("ir.embed").unwrap()].nrows() != ir_vocab.len()
            || model.params.tensors[model.params.index_of("query.embed").unwrap()].nrows() != query_vocab.len()
        {
            return Err(CheckpointError::Model("embedding rows differ from vocabulary size".into()));
        }
        Ok(Checkpoint {
            model,
            ir_vocab,
            query_vocab,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hex sha256 of the serialized checkpoint.
    pub fn version(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}
