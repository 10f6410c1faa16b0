//! Dense tensors and reverse-mode differentiation.

mod tape;
mod value;

pub use tape::{Tape, Var};
pub use value::Tensor;

use thiserror::Error;

/// Errors raised by tensor construction and tape operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: label {label} out of range [0, {classes})")]
    LabelOutOfRange {
        op: &'static str,
        label: usize,
        classes: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape}")]
    NonScalarLoss { shape: String },
    #[error("backward has already run on this tape")]
    BackwardAlreadyRun,
    #[error("{op}: tensor belongs to a different tape")]
    ForeignTensor { op: &'static str },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}
