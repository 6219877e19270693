//! Versioned binary checkpoints and the transfer-learning initializer.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "A3CK" | u32 version | u32 metadata length | metadata (key=value lines)
//! u32 tensor count | per tensor: u16 name length, name, u8 ndim, u32 dims.., f32 data
//! ```
//!
//! Optimizer statistics, when present, are stored as extra tensors named
//! `optim.<parameter name>`.

mod format;
mod transfer;

pub use format::{load, save, write_atomic, Checkpoint, Metadata, RngState, FORMAT_VERSION, MAGIC};
pub use transfer::{transfer_init, TransferInit};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}")]
    Truncated { needed: usize, offset: usize },
    #[error("malformed metadata: {0}")]
    BadMetadata(String),
    #[error("tensor table does not match the declared architecture: {0}")]
    ShapeInconsistency(String),
    #[error("incompatible transfer at tensor `{tensor}`: {detail}")]
    Incompatible { tensor: String, detail: String },
}

pub type Result<T, E = CkptError> = std::result::Result<T, E>;
