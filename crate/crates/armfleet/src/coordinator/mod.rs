//! Coordinator: owns the global policy, drives synchronous training rounds
//! across a cluster, merges the returned local models, and scores trained
//! policies for accuracy and repeatability.

mod eval;
mod experiment;
mod merge;
mod metrics;
mod train;

pub use eval::{evaluate_policy, AccuracyReport};
pub use experiment::{report, run_experiment, CellResult, ExperimentPlan, ExperimentSummary};
pub use merge::{merge_models, merge_models_weighted, MergeStrategy};
pub use metrics::{MetricsRow, TrainingMetrics, CSV_HEADER};
pub use train::{
    train, train_with_options, StopCriterion, StopReason, TrainError, TrainOptions, TrainOutcome,
};

use thiserror::Error;

use crate::kinematics::KinematicsError;
use crate::policy::PolicyError;
use crate::ppo::ConfigError;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum CoordError {
    #[error("cannot merge zero models")]
    EmptyMerge,
    #[error("bad merge weights: {reason}")]
    BadWeights { reason: String },
    #[error("{who}: parameter manifest mismatch: {detail}")]
    ManifestMismatch { who: String, detail: String },
    #[error("bad stop criterion: {reason}")]
    BadStop { reason: String },
    #[error("config requests {cfg} workers but the cluster has {cluster}")]
    WorkerCountMismatch { cfg: u32, cluster: usize },
    #[error("evaluation needs at least 2 runs, got {got}")]
    TooFewRuns { got: usize },
    #[error("worker {worker_id} reported: {message}")]
    Worker { worker_id: u32, message: String },
    #[error("worker {worker_id} sent {got} while the coordinator expected {expected}")]
    Protocol {
        worker_id: u32,
        expected: &'static str,
        got: String,
    },
    #[error("worker {worker_id}: {source}")]
    Transport {
        worker_id: u32,
        #[source]
        source: TransportError,
    },
    #[error(transparent)]
    Cluster(#[from] TransportError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("metrics csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
