//! Dense tensors and the handful of layers the policy networks are built from.
//!
//! Every layer exposes a forward function that returns whatever the backward
//! pass needs, and a backward function that accumulates parameter gradients
//! into the owning [`Tensor`]'s gradient buffer. There is no autodiff graph:
//! the network module wires the backward calls by hand.

mod gradcheck;
mod ops;
mod param;
mod scalar;
mod tensor;

pub use gradcheck::{gradient_check, gradient_check_sampled, GradCheckReport};
pub use ops::{
    conv2d, conv2d_backward, conv2d_forward, fully_connected, fully_connected_backward, log_softmax, logsumexp,
    masked_log_softmax, masked_softmax, relu, relu_backward, relu_in_place, softmax, Conv2dCache,
};
pub use param::{ParamSet, Parameter};
pub use scalar::{gemm, Real};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("masked softmax has no legal entry")]
    NoLegalAction,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

pub type Result<T, E = NumError> = std::result::Result<T, E>;
