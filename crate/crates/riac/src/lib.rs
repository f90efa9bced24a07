//! Part-wise skeleton action recognition.
//!
//! The pipeline: 3D skeleton sequences are parsed into a canonical form,
//! partitioned into five body parts, rendered into color-coded trajectory
//! images (CASS), fed through a small inception-style CNN with an
//! attention-gated residual skip and a two-layer LSTM head, and the five
//! part-wise predictions are combined by weighted late fusion.

pub mod cass;
pub mod config;
pub mod error;
pub mod eval;
pub mod net;
pub mod skeleton;
pub mod synthetic;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
