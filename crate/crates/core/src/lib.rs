//! Multimodal adversarial training and robustness evaluation.
//!
//! The crate trains a two-branch dense/sparse fusion classifier under
//! gradient attacks, optionally with attention-based modality reweighting,
//! and measures robustness with the clean / attacked-dense / attacked-sparse
//! / attacked-both accuracy protocol plus the derived Avg and RI metrics.
//!
//! Everything runs on an internal f64 reverse-mode tape ([`tensor`]); there
//! is no external numerics dependency, which keeps runs bit-reproducible
//! from a seed.

pub mod amr;
pub mod attacks;
pub mod datagen;
pub mod eval;
pub mod gradcheck;
pub mod nets;
pub mod rng;
pub mod tensor;
pub mod training;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error("model: {0}")]
    Model(String),
    #[error("attack: {0}")]
    Attack(String),
    #[error("training: {0}")]
    Train(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("data: {0}")]
    Data(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
