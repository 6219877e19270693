//! Parallel actor-learners with n-step returns and asynchronous updates of
//! shared parameters.

mod eval;
mod objective;
mod returns;
mod rollout;
mod shared;
mod train;

pub use eval::{evaluate, GreedyPolicy};
pub use objective::{accumulate_gradients, advantages, rollout_objective, GradStats, LossConfig};
pub use returns::compute_returns;
pub use rollout::{collect_rollout, sample_action, Rollout, Transition};
pub use shared::{LockMode, OptimizerConfig, OptimizerKind, SharedStore};
pub use train::{
    measure_throughput, train, EpisodeRecord, EpsilonSchedule, EvalRecord, TrainConfig, TrainReport, LOG_HEADER,
};

use thiserror::Error;

use crate::ckpt::CkptError;
use crate::env::EnvError;
use crate::net::NetError;
use crate::numcore::NumError;

#[derive(Debug, Error)]
pub enum A3cError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Ckpt(#[from] CkptError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("worker {worker} panicked: {message}")]
    WorkerPanicked { worker: usize, message: String },
}

pub type Result<T, E = A3cError> = std::result::Result<T, E>;
