//! Distributed reinforcement-learning trainer for kinematic reacher arms.
//!
//! A coordinator owns a global policy and drives a fleet of rollout workers.
//! Each round the policy is broadcast to every worker; workers collect
//! rollouts on an analytic forward-kinematics reacher environment, improve a
//! local copy with PPO, and return it; the coordinator merges the local
//! models into the next global policy. Workers run as in-process threads or
//! as separate processes speaking a framed byte protocol over TCP.

pub mod coordinator;
pub mod kinematics;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod transport;
pub mod worker;

pub use coordinator::{evaluate_policy, merge_models, train, AccuracyReport, StopCriterion};
pub use kinematics::{EnvKind, KinematicChain, ReacherEnv, ReacherEnvSpec};
pub use policy::ParamVector;
pub use ppo::PpoConfig;
