//! Neural encoders for graphs and queries, the differentiation tape they
//! run on, and model checkpoints.

mod checkpoint;
pub mod gradcheck;
mod model;
pub mod tape;

use std::fmt::Debug;

use ndarray::{Array2, ArrayView1, NdFloat};
use num_traits::FromPrimitive;
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use model::{
    batch_loss, encode_graphs, encode_queries, graph_attention, init_node_states, run_ggnn, GraphBatch,
    GraphInput, Model, ModelConfig, QueryEncoding,
};
pub use tape::{Grads, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("query has no tokens once padding is removed")]
    EmptyQuery,
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
}

/// Floating-point element type of tensors: `f32` for training, `f64` for
/// gradient checking.
pub trait Real: NdFloat + FromPrimitive + Default + Send + Sync {
    const DTYPE: &'static str;
    const BYTES: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Named 2-D tensors. Order is fixed at construction and is the order of
/// gradients, optimizer state and checkpoint entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Array2<T>>,
}

impl<T: Real> Params<T> {
    pub fn push(&mut self, name: impl Into<String>, t: Array2<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| t.mapv(|x| U::from_f64(x.to_f64().unwrap_or(0.0)).unwrap()))
                .collect(),
        }
    }
}

/// `a . b / (|a| |b|)`.
pub fn cosine<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> Result<T, NnError> {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == T::zero() || nb == T::zero() {
        return Err(NnError::ZeroVector);
    }
    Ok(a.dot(&b) / (na * nb))
}
