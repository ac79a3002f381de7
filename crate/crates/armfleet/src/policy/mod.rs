//! Gaussian MLP policy with hand-written forward and backward passes.
//!
//! Parameters live in a single flat [`ParamVector`] described by a
//! [`Manifest`]; the flat layout is what gets merged across workers and
//! serialized on the wire, so tensor order is part of the contract.

mod gaussian;
mod mlp;
mod params;

pub use gaussian::{entropy, kl_divergence, log_prob, sample_action};
pub use mlp::{ForwardBatch, GaussianPolicyOutput, MlpSpec, LOG_STD_MAX, LOG_STD_MIN};
pub use params::{Manifest, ParamVector, TensorSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("manifest has no tensors")]
    EmptyManifest,
    #[error("tensor name must be non-empty")]
    EmptyTensorName,
    #[error("duplicate tensor name {0:?}")]
    DuplicateTensor(String),
    #[error("tensor {name:?} has a zero dimension")]
    ZeroDim { name: String },
    #[error("manifest describes {0} values, exceeding the 2^31-1 cap")]
    TooLarge(u128),
    #[error("value count {got} does not match manifest size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parameter value at index {0} is not finite")]
    NonFiniteValue(usize),
    #[error("observation has length {got}, policy expects {expected}")]
    ObservationLength { expected: usize, got: usize },
    #[error("action has length {got}, policy expects {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("parameter manifests differ: {0}")]
    ManifestMismatch(String),
    #[error("invalid mlp spec: {0}")]
    BadSpec(String),
}
