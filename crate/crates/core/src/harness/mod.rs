//! Experiment orchestration: multi-seed runs, weight sweeps, aggregation and
//! the small-instance allocation oracle.

mod aggregate;
mod experiment;
mod oracle;

use std::path::PathBuf;

use thiserror::Error;

pub use aggregate::{
    aggregate_dir, aggregate_sweep, spearman, summary_metric, tail, tail_mean, Band, RunMetrics, SweepRow, SweepSummary,
    SUMMARY_METRICS,
};
pub use experiment::{
    load_manifest, run_experiment, ExperimentSpec, Manifest, RunEntry, RunFiles, RunPlan, RunStatus, SweepAxis,
    DEFAULT_TAIL_FRACTION, MANIFEST_FILE,
};
pub use oracle::{allocation_count, brute_force_allocation_oracle, OracleResult, OracleRow, ORACLE_MAX_ALLOCATIONS};

use crate::config::ConfigError;
use crate::env::EnvError;
use crate::reward::RewardError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("oracle needs {count} allocations, limit is {limit}")]
    OracleTooLarge { count: String, limit: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

impl HarnessError {
    fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
