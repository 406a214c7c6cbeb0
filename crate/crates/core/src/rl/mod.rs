//! Advantage estimation, PPO updates, the loss-sharing critic update and
//! the end-to-end training loops.

pub mod buffer;
pub mod gae;
pub mod log;
pub mod ppo;
pub mod trainer;

use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;
use crate::reward::RewardError;

pub use buffer::{ReturnScaler, Transition, TrajectoryBuffer};
pub use gae::compute_gae;
pub use log::{read_metrics_csv, write_metrics_csv, MetricsRecord, TrainingLog, UpdateRecord, CSV_COLUMNS};
pub use ppo::{mals_critic_update, ppo_actor_update, CriticLosses, CriticSample, PpoSample, PpoStats};
pub use trainer::{evaluate, run_random, train, train_env, train_in_env, Agents, Algorithm, TrainFailure, TrainOutput};

#[derive(Debug, Error, PartialEq)]
pub enum RlError {
    #[error("{what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite probability ratio {value} at batch index {index}")]
    NonFiniteRatio { index: usize, value: f64 },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
