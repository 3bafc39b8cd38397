//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A TSV line could not be parsed. Line numbers are 1-based.
    #[error("{path}:{line}: malformed triple line: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    /// An id-mapping file contained a duplicate or malformed entry.
    #[error("{path}:{line}: bad id-map entry: {reason}")]
    IdMap {
        path: String,
        line: usize,
        reason: String,
    },

    /// A label or numeric id was not found in the vocabulary.
    #[error("unknown {what} {id:?}")]
    UnknownId { what: &'static str, id: String },

    /// A deletion request resolved to nothing.
    #[error("deletion request resolved to zero triples")]
    EmptyDeletion,

    /// An argument was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two models (or a model and a graph) disagree on shape.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Aligned positive/negative lists have incompatible lengths.
    #[error("negative list length {neg} is not a positive multiple of positive list length {pos}")]
    MisalignedLists { pos: usize, neg: usize },

    /// Training produced a non-finite batch loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// A finite-difference probe returned a non-finite value.
    #[error("non-finite value while probing parameter slot {slot}")]
    NonFiniteProbe { slot: String },

    /// An iterative inverse-Hessian estimate blew up.
    #[error(
        "iteration diverged at step {iter}: |u| = {norm:.3e} exceeds {bound:.3e}; \
         retry with a smaller step size"
    )]
    Divergence { iter: usize, norm: f64, bound: f64 },

    /// A checkpoint file was rejected.
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
