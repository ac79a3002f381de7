//! Rollout worker: owns one environment and one learner. Per round it
//! receives the global parameters, gathers whole episodes until the step
//! quota, performs a local update, and returns its local model.

mod serve;
mod state;

pub use serve::{worker_entry, worker_serve, WorkerExpectations};
pub use state::WorkerState;

pub use crate::ppo::RolloutBatch;

use thiserror::Error;

use crate::kinematics::KinematicsError;
use crate::ppo::PpoError;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("worker {worker_id}: environment failure: {source}")]
    Env {
        worker_id: u32,
        #[source]
        source: KinematicsError,
    },
    #[error("worker {worker_id}: learner failure: {source}")]
    Learner {
        worker_id: u32,
        #[source]
        source: PpoError,
    },
    #[error("worker {worker_id}: {source}")]
    Transport {
        worker_id: u32,
        #[source]
        source: TransportError,
    },
    #[error("worker {worker_id}: unusable assignment: {reason}")]
    BadAssignment { worker_id: u32, reason: String },
    #[error(
        "worker {worker_id}: assigned {what} `{assigned}` contradicts the launch flag `{expected}`"
    )]
    AssignmentMismatch {
        worker_id: u32,
        what: &'static str,
        expected: String,
        assigned: String,
    },
    #[error("worker {worker_id}: received {got} while expecting {expected}")]
    Protocol {
        worker_id: u32,
        expected: &'static str,
        got: &'static str,
    },
    #[error("worker {worker_id}: parameter manifest mismatch: {detail}")]
    ManifestMismatch { worker_id: u32, detail: String },
}

impl WorkerError {
    pub fn worker_id(&self) -> u32 {
        match self {
            WorkerError::Env { worker_id, .. }
            | WorkerError::Learner { worker_id, .. }
            | WorkerError::Transport { worker_id, .. }
            | WorkerError::BadAssignment { worker_id, .. }
            | WorkerError::AssignmentMismatch { worker_id, .. }
            | WorkerError::Protocol { worker_id, .. }
            | WorkerError::ManifestMismatch { worker_id, .. } => *worker_id,
        }
    }
}
