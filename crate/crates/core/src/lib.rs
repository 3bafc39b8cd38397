//! Knowledge-graph embedding training with surgical forgetting.
//!
//! The crate covers the full loop around removing facts from a trained
//! embedding model without retraining it from scratch:
//!
//! 1. load a triple store and train a translational or rotational embedding
//!    model on it ([`graph`], [`model`], [`train`]);
//! 2. resolve a deletion request — triples, entities, or whole relations —
//!    into the exact triple set to forget ([`graph`]);
//! 3. estimate the parameter correction that removing those triples implies,
//!    using influence-function updates whose inverse-Hessian piece is
//!    approximated either by iteration against the remaining data or by a
//!    rank-one curvature surrogate, with gradients obtained analytically or
//!    through finite differences only ([`unlearn`]);
//! 4. measure what changed: ranking metrics on deleted versus retained
//!    triples, parameter-space distance against a retrained reference, and a
//!    2-D projection for visual inspection ([`eval`]).
//!
//! Everything is deterministic given a seed: parameters are `f32`, all math
//! runs in `f64`, and checkpoints round-trip bit-exactly.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod grad;
pub mod graph;
pub mod model;
pub mod rss;
pub mod score;
pub mod sparse;
pub mod train;
pub mod unlearn;

pub use error::{Error, Result};
