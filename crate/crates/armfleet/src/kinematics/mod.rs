//! Analytic reacher environments.
//!
//! Replaces a physics simulation with closed-form forward kinematics: a
//! [`KinematicChain`] describes the arm, [`ReacherEnvSpec`] adds the task
//! (target region, horizon, reward threshold), and [`ReacherEnv`] steps it
//! under per-joint position deltas with reward equal to the negative
//! distance between end effector and target.

mod chain;
mod env;
mod file;
mod presets;

pub use chain::{Joint, JointKind, KinematicChain};
pub use env::{EnvState, Observation, ReacherEnv, ReacherEnvSpec, StepResult, TargetRegion};
pub use file::{format_chain_file, parse_chain_file};
pub use presets::EnvKind;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("chain must have at least one joint")]
    EmptyChain,
    #[error("joint {index}: axis norm {norm} is not 1 (tolerance 1e-12)")]
    AxisNotUnit { index: usize, norm: f64 },
    #[error("joint {index}: limit_lo {lo} must be < limit_hi {hi}")]
    BadLimits { index: usize, lo: f64, hi: f64 },
    #[error("joint vector has length {got}, chain has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint {index}: value {value} outside limits [{lo}, {hi}]")]
    OutOfLimits {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("action has length {got}, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("episode already finished; reset the environment before stepping")]
    EpisodeFinished,
    #[error("target region invalid: lo {lo:?} must be elementwise < hi {hi:?}")]
    BadTargetRegion { lo: [f64; 3], hi: [f64; 3] },
    #[error("target region not reachable: no joint configuration reaches {target:?} (best miss {best_miss} m)")]
    TargetRegionUnreachable { target: [f64; 3], best_miss: f64 },
    #[error("horizon must be >= 1")]
    BadHorizon,
    #[error("reward_stop_threshold must be <= 0, got {0}")]
    BadRewardThreshold(f64),
    #[error("action_scale must be finite and > 0, got {0}")]
    BadActionScale(f64),
    #[error("chain file line {line}: {reason}")]
    ChainFile { line: usize, reason: String },
    #[error("unknown environment preset {0:?} (expected scara3 or arm6)")]
    UnknownPreset(String),
}
