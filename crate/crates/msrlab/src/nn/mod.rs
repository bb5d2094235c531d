//! A minimal, self-contained neural-network engine for matrix-completion
//! models: rank-4 tensors, convolution / batch-normalization / PReLU / dense
//! layers with exact backpropagation, Glorot initialization, Adam, and the two
//! training losses (plain Frobenius and seam-regularized).
//!
//! The engine is deliberately small: stride-1 "same"-padded convolutions and a
//! single dense head are all the retrieval architecture needs. Everything runs
//! in `f64` on the CPU, single-threaded, and is bitwise reproducible for a
//! fixed seed.

mod adam;
mod init;
mod layers;
mod loss;
mod network;
mod tensor;
mod train;

pub use adam::Adam;
pub use init::{glorot_limit, glorot_uniform};
pub use layers::{BatchNorm2d, BnCache, Conv2d, Dense, PRelu};
pub use loss::{loss_l1, loss_l2, LossKind};
pub use network::{
    CheckpointMeta, ConvBlock, ForwardCache, Network, NetworkSpec, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use tensor::Tensor;
pub use train::{grad_check, train, TrainConfig, TrainReport};

/// Errors raised by tensor algebra, layer evaluation, training, and
/// checkpoint I/O.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    /// A tensor or parameter block had the wrong extents for the operation.
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// A scalar argument was out of its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Batch normalization needs at least two samples to form batch statistics.
    #[error("batch size must be at least 2 in training mode (got {0})")]
    BatchTooSmall(usize),
    /// Training hit a non-finite loss or gradient; parameters were restored to
    /// the state at the start of the offending epoch.
    #[error(
        "non-finite loss or gradient at epoch {epoch}, batch {batch}; \
         parameters restored to the last good state"
    )]
    NonFinite { epoch: usize, batch: usize },
    /// An optimizer step received a non-finite gradient component.
    #[error("non-finite gradient in parameter block {index}")]
    NonFiniteGradient { index: usize },
    /// Checkpoint file could not be read or written.
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    /// Checkpoint bytes did not match the expected layout.
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
}
