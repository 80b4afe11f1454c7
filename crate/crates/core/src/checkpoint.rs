//! Named parameter maps, the interchange form for model and Q-network weights.
//!
//! A checkpoint is `{ "schema_version": 1, "kind": ..., "meta": {...},
//! "params": { name: { "shape": [..], "data": [..] } } }`; the companion crate
//! writes it as JSON.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint schema version {0}")]
    Version(u32),
    #[error("checkpoint kind {found:?} where {expected:?} was expected")]
    Kind { expected: String, found: String },
    #[error("parameter {0:?} missing from checkpoint")]
    Missing(String),
    #[error("parameter {name:?} has shape {found:?}, expected {expected:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint metadata is invalid: {0}")]
    Meta(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub schema_version: u32,
    pub kind: String,
    pub meta: M,
    pub params: BTreeMap<String, TensorRecord>,
}

impl<M> Checkpoint<M> {
    pub fn new<'a>(kind: &str, meta: M, named: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Self {
        let params = named
            .into_iter()
            .map(|(name, t)| (String::from(name), TensorRecord { shape: t.shape().to_vec(), data: t.data().to_vec() }))
            .collect();
        Self { schema_version: CHECKPOINT_SCHEMA_VERSION, kind: kind.into(), meta, params }
    }

    pub fn check_header(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(CheckpointError::Version(self.schema_version));
        }
        if self.kind != kind {
            return Err(CheckpointError::Kind { expected: kind.into(), found: self.kind.clone() });
        }
        Ok(())
    }

    /// Copies stored values into `target`, which fixes the expected shape.
    pub fn fill(&self, name: &str, target: &mut Tensor) -> Result<(), CheckpointError> {
        let rec = self.params.get(name).ok_or_else(|| CheckpointError::Missing(name.into()))?;
        if rec.shape != target.shape() || rec.data.len() != target.len() {
            return Err(CheckpointError::Shape {
                name: name.into(),
                expected: target.shape().to_vec(),
                found: rec.shape.clone(),
            });
        }
        target.data_mut().copy_from_slice(&rec.data);
        Ok(())
    }
}
