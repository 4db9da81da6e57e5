//! Trainable-network substrate: a small reverse-mode autodiff tape, layer
//! stacks (dense, LSTM, GRU, transformer encoder), Adam, checkpointing, and
//! a finite-difference gradient checker.

mod gradcheck;
mod net;
mod params;
mod tape;

use thiserror::Error;

pub use gradcheck::gradient_check;
pub use net::{Activation, BoundParams, LayerSpec, Network, LAYER_NORM_EPS};
pub use params::{AdamConfig, ParamStore};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Error)]
pub enum NncoreError {
    #[error("invalid layer spec: {message}")]
    InvalidSpec { message: String },
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("duplicate parameter name {name:?}")]
    DuplicateParam { name: String },
    #[error("unknown parameter {name:?}")]
    UnknownParam { name: String },
    #[error("non-finite gradient for parameter {name:?}")]
    NonFiniteGradient { name: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path} is corrupt: {message}")]
    CorruptCheckpoint { path: String, message: String },
}
