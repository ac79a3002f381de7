//! Kinematic chains and forward kinematics.

use super::KinematicsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One joint of a serial chain. The joint moves first (rotation about
/// `axis` for revolute, translation along `axis` for prismatic), then the
/// fixed link translation `offset` follows, both expressed in the frame the
/// joint lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub offset: [f64; 3],
    pub limit_lo: f64,
    pub limit_hi: f64,
}

/// Serial kinematic chain anchored at the identity base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<Joint>,
}

const AXIS_NORM_TOL: f64 = 1e-12;
/// Slack for joint values that were clamped exactly onto a limit.
const LIMIT_TOL: f64 = 1e-9;

impl KinematicChain {
    pub fn new(joints: Vec<Joint>) -> Result<Self, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::EmptyChain);
        }
        for (index, j) in joints.iter().enumerate() {
            let norm = dot(j.axis, j.axis).sqrt();
            if (norm - 1.0).abs() > AXIS_NORM_TOL {
                return Err(KinematicsError::AxisNotUnit { index, norm });
            }
            if !(j.limit_lo < j.limit_hi) {
                return Err(KinematicsError::BadLimits {
                    index,
                    lo: j.limit_lo,
                    hi: j.limit_hi,
                });
            }
            if !j.offset.iter().all(|v| v.is_finite()) {
                return Err(KinematicsError::NonFinite { index });
            }
        }
        Ok(Self { joints })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    /// Midpoint of every joint range; the canonical reset configuration.
    pub fn mid_range(&self) -> Vec<f64> {
        self.joints
            .iter()
            .map(|j| 0.5 * (j.limit_lo + j.limit_hi))
            .collect()
    }

    /// Upper bound on the end-effector distance from the base: the sum of
    /// link offsets plus the largest prismatic travel per joint.
    pub fn max_reach(&self) -> f64 {
        self.joints
            .iter()
            .map(|j| {
                let link = dot(j.offset, j.offset).sqrt();
                match j.kind {
                    JointKind::Revolute => link,
                    JointKind::Prismatic => link + j.limit_lo.abs().max(j.limit_hi.abs()),
                }
            })
            .sum()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limit_lo, j.limit_hi);
        }
    }

    /// End-effector position for joint vector `q`.
    ///
    /// Composes per-joint rigid transforms in order; rejects wrong-length,
    /// non-finite, or out-of-limit input.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<[f64; 3], KinematicsError> {
        if q.len() != self.joints.len() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        for (index, (&v, j)) in q.iter().zip(&self.joints).enumerate() {
            if !v.is_finite() {
                return Err(KinematicsError::NonFinite { index });
            }
            if v < j.limit_lo - LIMIT_TOL || v > j.limit_hi + LIMIT_TOL {
                return Err(KinematicsError::OutOfLimits {
                    index,
                    value: v,
                    lo: j.limit_lo,
                    hi: j.limit_hi,
                });
            }
        }
        // Accumulate orientation as a row-major 3x3 matrix and position as a
        // 3-vector instead of full homogeneous transforms.
        let mut rot = IDENTITY;
        let mut pos = [0.0; 3];
        for (&v, j) in q.iter().zip(&self.joints) {
            match j.kind {
                JointKind::Revolute => rot = mat_mul(rot, axis_angle(j.axis, v)),
                JointKind::Prismatic => {
                    let d = mat_vec(rot, scale(j.axis, v));
                    pos = add(pos, d);
                }
            }
            pos = add(pos, mat_vec(rot, j.offset));
        }
        Ok(pos)
    }
}

type Mat3 = [f64; 9];

const IDENTITY: Mat3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn mat_vec(m: Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
        m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
        m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
    ]
}

fn mat_mul(a: Mat3, b: Mat3) -> Mat3 {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
        }
    }
    out
}

/// Rodrigues rotation about unit `axis` by `angle`, row-major.
fn axis_angle(axis: [f64; 3], angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        t * x * x + c,
        t * x * y - s * z,
        t * x * z + s * y,
        t * x * y + s * z,
        t * y * y + c,
        t * y * z - s * x,
        t * x * z - s * y,
        t * y * z + s * x,
        t * z * z + c,
    ]
}
