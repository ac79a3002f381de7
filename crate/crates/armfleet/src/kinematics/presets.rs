//! Built-in robot presets.

use std::fmt;
use std::str::FromStr;

use super::chain::{Joint, JointKind, KinematicChain};
use super::env::{ReacherEnvSpec, TargetRegion};
use super::KinematicsError;

/// 3-DoF SCARA: two revolute joints about z (links 0.30 m and 0.25 m) and a
/// vertical prismatic joint with 0.10 m travel. Joint limits confine the arm
/// to a well-conditioned work cell: the elbow stays near 90 degrees, away
/// from the straight-arm singularity, and the reachable pocket is a few
/// tens of centimeters across, which keeps discounted returns small enough
/// for the value head to track at the stock learning rate.
pub fn scara3_chain() -> KinematicChain {
    KinematicChain::new(vec![
        Joint {
            kind: JointKind::Revolute,
            axis: [0.0, 0.0, 1.0],
            offset: [0.30, 0.0, 0.0],
            limit_lo: 0.0,
            limit_hi: 0.4,
        },
        Joint {
            kind: JointKind::Revolute,
            axis: [0.0, 0.0, 1.0],
            offset: [0.25, 0.0, 0.0],
            limit_lo: 1.3,
            limit_hi: 1.9,
        },
        Joint {
            kind: JointKind::Prismatic,
            axis: [0.0, 0.0, 1.0],
            offset: [0.0, 0.0, 0.0],
            limit_lo: 0.0,
            limit_hi: 0.10,
        },
    ])
    .expect("scara3 preset is valid")
}

/// 6-DoF articulated arm: alternating z/y revolute joints with link lengths
/// [0.20, 0.20, 0.20, 0.15, 0.15, 0.10] m. As with the SCARA preset, the
/// limits keep every pitch joint bent away from singular stretches and box
/// the reachable pocket to a work-cell scale the learner can value-estimate
/// quickly.
pub fn arm6_chain() -> KinematicChain {
    let lengths = [0.20, 0.20, 0.20, 0.15, 0.15, 0.10];
    let limits = [
        (-0.05, 0.25),
        (0.45, 0.75),
        (-0.10, 0.10),
        (0.60, 1.40),
        (-0.10, 0.10),
        (-0.55, -0.25),
    ];
    let joints = lengths
        .iter()
        .zip(limits)
        .enumerate()
        .map(|(i, (&len, (lo, hi)))| Joint {
            kind: JointKind::Revolute,
            axis: if i % 2 == 0 {
                [0.0, 0.0, 1.0]
            } else {
                [0.0, 1.0, 0.0]
            },
            offset: [len, 0.0, 0.0],
            limit_lo: lo,
            limit_hi: hi,
        })
        .collect();
    KinematicChain::new(joints).expect("arm6 preset is valid")
}

/// Named environment preset selectable from the CLI and config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Scara3,
    Arm6,
}

impl EnvKind {
    pub const ALL: [EnvKind; 2] = [EnvKind::Scara3, EnvKind::Arm6];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Scara3 => "scara3",
            EnvKind::Arm6 => "arm6",
        }
    }

    pub fn chain(self) -> KinematicChain {
        match self {
            EnvKind::Scara3 => scara3_chain(),
            EnvKind::Arm6 => arm6_chain(),
        }
    }

    /// Default task for the preset. Each target box is centered on the
    /// end effector's mid-range pose, sits well inside the reachable
    /// pocket (verified at construction), and spans several centimeters
    /// per axis so a target-blind policy cannot approach the reward
    /// threshold by parking at the box center.
    pub fn spec(self) -> ReacherEnvSpec {
        let (region, action_scale) = match self {
            EnvKind::Scara3 => (
                TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]),
                0.015,
            ),
            EnvKind::Arm6 => (
                TargetRegion::new([0.50, 0.00, -0.63], [0.60, 0.10, -0.59]),
                0.015,
            ),
        };
        let region = region.expect("preset target region is valid");
        ReacherEnvSpec::new(self.chain(), region, 2048, -0.01, action_scale)
            .expect("preset spec is valid")
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = KinematicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "scara3" => Ok(EnvKind::Scara3),
            "arm6" => Ok(EnvKind::Arm6),
            other => Err(KinematicsError::UnknownPreset(other.to_string())),
        }
    }
}
