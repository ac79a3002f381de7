//! Local PPO learner: advantage estimation, clipped-surrogate plus
//! adaptive-KL loss, and multi-epoch minibatch updates with adaptive-moment
//! steps.

mod advantage;
mod config;
mod loss;
mod optim;

pub use advantage::{compute_advantages, ProcessedBatch, RolloutBatch};
pub use config::{parse_ppo_config, ConfigError, PpoConfig};
pub use loss::{loss_and_grad, ppo_loss, BatchView, LossBreakdown, OldPolicyStats};
pub use optim::{adapt_kl_coeff, adam_step, plain_sgd_step, sgd_update, AdamState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{column}[{index}] is not finite")]
    NonFiniteInput { column: &'static str, index: usize },
    #[error("probability ratio for sample {sample} is not finite")]
    NonFiniteRatio { sample: usize },
    #[error("loss term {term} is not finite")]
    NonFiniteLoss { term: &'static str },
    #[error("batch has {len} samples, sgd_batchsize needs {batchsize}")]
    BatchTooSmall { len: usize, batchsize: usize },
    #[error("rollout columns disagree: {0}")]
    ColumnSkew(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
}
