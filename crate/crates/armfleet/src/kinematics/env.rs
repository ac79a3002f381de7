//! Reacher task on top of a kinematic chain.

use rand::Rng;

use super::chain::KinematicChain;
use super::KinematicsError;
use crate::rng::{stream, tag};

/// Axis-aligned box targets are drawn from, in workspace meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRegion {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl TargetRegion {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self, KinematicsError> {
        let finite = lo.iter().chain(hi.iter()).all(|v| v.is_finite());
        if !finite || lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Err(KinematicsError::BadTargetRegion { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> [f64; 3] {
        self.lo
    }

    pub fn hi(&self) -> [f64; 3] {
        self.hi
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    /// Half the box diagonal; the length unit of task-frame observations.
    /// Construction guarantees a strictly positive extent on every axis, so
    /// this is never zero.
    pub fn half_diagonal(&self) -> f64 {
        let d = [
            0.5 * (self.hi[0] - self.lo[0]),
            0.5 * (self.hi[1] - self.lo[1]),
            0.5 * (self.hi[2] - self.lo[2]),
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        let mut out = [[0.0; 3]; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            for axis in 0..3 {
                corner[axis] = if i >> axis & 1 == 0 {
                    self.lo[axis]
                } else {
                    self.hi[axis]
                };
            }
        }
        out
    }

    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        [
            rng.gen_range(self.lo[0]..self.hi[0]),
            rng.gen_range(self.lo[1]..self.hi[1]),
            rng.gen_range(self.lo[2]..self.hi[2]),
        ]
    }
}

/// Validated description of one reacher task.
#[derive(Debug, Clone)]
pub struct ReacherEnvSpec {
    chain: KinematicChain,
    target_region: TargetRegion,
    horizon: u32,
    reward_stop_threshold: f64,
    action_scale: f64,
}

/// Fixed seed for the construction-time reachability audit; the audit is
/// part of spec validation, not of any experiment's random stream.
const REGION_PROBE_SEED: u64 = 0x7265_6163_6861_626c;
const REGION_PROBE_SAMPLES: usize = 16;
const IK_TOLERANCE: f64 = 1e-4;
const IK_MAX_ITERS: usize = 250;
const IK_RESTARTS: usize = 8;

impl ReacherEnvSpec {
    pub fn new(
        chain: KinematicChain,
        target_region: TargetRegion,
        horizon: u32,
        reward_stop_threshold: f64,
        action_scale: f64,
    ) -> Result<Self, KinematicsError> {
        if horizon == 0 {
            return Err(KinematicsError::BadHorizon);
        }
        if !(reward_stop_threshold <= 0.0) {
            return Err(KinematicsError::BadRewardThreshold(reward_stop_threshold));
        }
        if !action_scale.is_finite() || action_scale <= 0.0 {
            return Err(KinematicsError::BadActionScale(action_scale));
        }
        audit_region_reachable(&chain, &target_region)?;
        Ok(Self {
            chain,
            target_region,
            horizon,
            reward_stop_threshold,
            action_scale,
        })
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn target_region(&self) -> &TargetRegion {
        &self.target_region
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn reward_stop_threshold(&self) -> f64 {
        self.reward_stop_threshold
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    pub fn action_dim(&self) -> usize {
        self.chain.dof()
    }

    /// Normalized joint positions, end effector, target.
    pub fn obs_dim(&self) -> usize {
        self.chain.dof() + 6
    }

    /// Same spec with a different horizon; used when a training config
    /// overrides the preset episode length.
    pub fn with_horizon(mut self, horizon: u32) -> Result<Self, KinematicsError> {
        if horizon == 0 {
            return Err(KinematicsError::BadHorizon);
        }
        self.horizon = horizon;
        Ok(self)
    }
}

/// Certifies every probe target (box corners, center, and a fixed batch of
/// interior samples) reachable by damped-least-squares inverse kinematics.
fn audit_region_reachable(
    chain: &KinematicChain,
    region: &TargetRegion,
) -> Result<(), KinematicsError> {
    let mut rng = stream(REGION_PROBE_SEED, &[tag::REGION_CHECK]);
    let mut probes = Vec::with_capacity(9 + REGION_PROBE_SAMPLES);
    probes.extend_from_slice(&region.corners());
    probes.push(region.center());
    for _ in 0..REGION_PROBE_SAMPLES {
        probes.push(region.sample(&mut rng));
    }
    for target in probes {
        let mut best_miss = f64::INFINITY;
        let mut start = chain.mid_range();
        for _ in 0..=IK_RESTARTS {
            let miss = solve_reach(chain, target, &start);
            best_miss = best_miss.min(miss);
            if best_miss < IK_TOLERANCE {
                break;
            }
            start = chain
                .joints()
                .iter()
                .map(|j| rng.gen_range(j.limit_lo..j.limit_hi))
                .collect();
        }
        if best_miss >= IK_TOLERANCE {
            return Err(KinematicsError::TargetRegionUnreachable { target, best_miss });
        }
    }
    Ok(())
}

/// Damped-least-squares descent toward `target` from `start`; returns the
/// best end-effector miss distance found.
fn solve_reach(chain: &KinematicChain, target: [f64; 3], start: &[f64]) -> f64 {
    let dof = chain.dof();
    let mut q = start.to_vec();
    chain.clamp(&mut q);
    let mut best = f64::INFINITY;
    for _ in 0..IK_MAX_ITERS {
        let ee = chain.forward_kinematics(&q).expect("clamped q is in limits");
        let err = [target[0] - ee[0], target[1] - ee[1], target[2] - ee[2]];
        let miss = (err[0] * err[0] + err[1] * err[1] + err[2] * err[2]).sqrt();
        best = best.min(miss);
        if miss < IK_TOLERANCE * 0.5 {
            break;
        }
        let jac = numeric_jacobian(chain, &q);
        let delta = dls_step(&jac, err, dof);
        let mut moved = 0.0f64;
        for (qi, di) in q.iter_mut().zip(&delta) {
            let step = di.clamp(-0.25, 0.25);
            *qi += step;
            moved = moved.max(step.abs());
        }
        chain.clamp(&mut q);
        if moved < 1e-12 {
            break;
        }
    }
    best
}

/// Central-difference Jacobian, columns per joint, clamped at limits.
fn numeric_jacobian(chain: &KinematicChain, q: &[f64]) -> Vec<[f64; 3]> {
    const H: f64 = 1e-6;
    let joints = chain.joints();
    let mut cols = Vec::with_capacity(q.len());
    let mut probe = q.to_vec();
    for i in 0..q.len() {
        let hi = (q[i] + H).min(joints[i].limit_hi);
        let lo = (q[i] - H).max(joints[i].limit_lo);
        probe[i] = hi;
        let fp = chain.forward_kinematics(&probe).expect("probe in limits");
        probe[i] = lo;
        let fm = chain.forward_kinematics(&probe).expect("probe in limits");
        probe[i] = q[i];
        let span = hi - lo;
        cols.push([
            (fp[0] - fm[0]) / span,
            (fp[1] - fm[1]) / span,
            (fp[2] - fm[2]) / span,
        ]);
    }
    cols
}

/// delta = J^T (J J^T + lambda I)^-1 err, the 3x3 right-pseudo-inverse form.
fn dls_step(jac: &[[f64; 3]], err: [f64; 3], dof: usize) -> Vec<f64> {
    const LAMBDA: f64 = 1e-4;
    let mut jjt = [[0.0f64; 3]; 3];
    for col in jac {
        for r in 0..3 {
            for c in 0..3 {
                jjt[r][c] += col[r] * col[c];
            }
        }
    }
    for (r, row) in jjt.iter_mut().enumerate() {
        row[r] += LAMBDA;
    }
    let y = solve3(jjt, err);
    let mut delta = vec![0.0; dof];
    for (d, col) in delta.iter_mut().zip(jac) {
        *d = col[0] * y[0] + col[1] * y[1] + col[2] * y[2];
    }
    delta
}

/// Gaussian elimination with partial pivoting for a 3x3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for k in 0..3 {
        let pivot = (k..3)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .expect("non-empty range");
        a.swap(k, pivot);
        b.swap(k, pivot);
        let diag = a[k][k];
        if diag.abs() < 1e-300 {
            continue;
        }
        for i in k + 1..3 {
            let f = a[i][k] / diag;
            for c in k..3 {
                a[i][c] -= f * a[k][c];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let mut acc = b[k];
        for c in k + 1..3 {
            acc -= a[k][c] * x[c];
        }
        x[k] = if a[k][k].abs() < 1e-300 {
            0.0
        } else {
            acc / a[k][k]
        };
    }
    x
}

/// Complete environment state; `seed` and `episode` identify the
/// counter-based target stream so trajectories replay bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub joint_positions: Vec<f64>,
    pub target: [f64; 3],
    pub steps_elapsed: u32,
    pub seed: u64,
    pub episode: u64,
}

/// Flat observation vector in the task frame: joint positions normalized to
/// [-1, 1] by their limits, then the end-effector offset from the target
/// region's center, then the target-minus-end-effector error vector. Both
/// position blocks are divided by the region's half-diagonal so every entry
/// stays near unit scale regardless of the robot's physical size.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    dof: usize,
    values: Vec<f64>,
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn joint_positions(&self) -> &[f64] {
        &self.values[..self.dof]
    }

    /// End-effector offset from the target-region center, in half-diagonal
    /// units.
    pub fn end_effector_offset(&self) -> [f64; 3] {
        [
            self.values[self.dof],
            self.values[self.dof + 1],
            self.values[self.dof + 2],
        ]
    }

    /// Target minus end effector, in half-diagonal units.
    pub fn target_error(&self) -> [f64; 3] {
        [
            self.values[self.dof + 3],
            self.values[self.dof + 4],
            self.values[self.dof + 5],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub distance: f64,
}

/// Single-owner reacher environment instance.
#[derive(Debug, Clone)]
pub struct ReacherEnv {
    spec: ReacherEnvSpec,
    seed: u64,
    next_episode: u64,
    state: EnvState,
}

impl ReacherEnv {
    /// Creates the environment and resets it to episode 0.
    pub fn new(spec: ReacherEnvSpec, seed: u64) -> Self {
        let state = EnvState {
            joint_positions: spec.chain.mid_range(),
            target: [0.0; 3],
            steps_elapsed: 0,
            seed,
            episode: 0,
        };
        let mut env = Self {
            spec,
            seed,
            next_episode: 0,
            state,
        };
        env.reset();
        env
    }

    pub fn spec(&self) -> &ReacherEnvSpec {
        &self.spec
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Starts the next episode: joints to mid-range, fresh target drawn from
    /// the (seed, episode) stream.
    pub fn reset(&mut self) -> Observation {
        let episode = self.next_episode;
        let mut rng = stream(self.seed, &[tag::ENV_RESET, episode]);
        let target = self.spec.target_region.sample(&mut rng);
        self.begin_episode(target)
    }

    /// Starts the next episode with a caller-chosen target; used by policy
    /// evaluation where all runs share one target.
    pub fn reset_with_target(&mut self, target: [f64; 3]) -> Result<Observation, KinematicsError> {
        if let Some(index) = target.iter().position(|v| !v.is_finite()) {
            return Err(KinematicsError::NonFinite { index });
        }
        Ok(self.begin_episode(target))
    }

    fn begin_episode(&mut self, target: [f64; 3]) -> Observation {
        self.state = EnvState {
            joint_positions: self.spec.chain.mid_range(),
            target,
            steps_elapsed: 0,
            seed: self.seed,
            episode: self.next_episode,
        };
        self.next_episode += 1;
        self.observation()
    }

    /// Overrides the current joint configuration; entries must be finite and
    /// within limits.
    pub fn set_joint_positions(&mut self, q: &[f64]) -> Result<(), KinematicsError> {
        self.spec.chain.forward_kinematics(q)?;
        self.state.joint_positions.copy_from_slice(q);
        Ok(())
    }

    /// Applies per-joint position deltas: `action` is clamped to [-1, 1],
    /// scaled by `action_scale`, added to the joints, and the joints are
    /// clamped to their limits. Reward is the negative distance between the
    /// resulting end effector and the target.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, KinematicsError> {
        let dof = self.spec.chain.dof();
        if action.len() != dof {
            return Err(KinematicsError::ActionLength {
                expected: dof,
                got: action.len(),
            });
        }
        if let Some(index) = action.iter().position(|v| !v.is_finite()) {
            return Err(KinematicsError::NonFinite { index });
        }
        if self.state.steps_elapsed >= self.spec.horizon {
            return Err(KinematicsError::EpisodeFinished);
        }
        for (qi, &a) in self.state.joint_positions.iter_mut().zip(action) {
            *qi += a.clamp(-1.0, 1.0) * self.spec.action_scale;
        }
        self.spec.chain.clamp(&mut self.state.joint_positions);
        self.state.steps_elapsed += 1;
        let ee = self
            .spec
            .chain
            .forward_kinematics(&self.state.joint_positions)
            .expect("clamped joints are in limits");
        let t = self.state.target;
        let distance =
            ((ee[0] - t[0]).powi(2) + (ee[1] - t[1]).powi(2) + (ee[2] - t[2]).powi(2)).sqrt();
        Ok(StepResult {
            observation: self.observation(),
            reward: -distance,
            done: self.state.steps_elapsed >= self.spec.horizon,
            distance,
        })
    }

    /// Current end-effector position in workspace meters.
    pub fn end_effector(&self) -> [f64; 3] {
        self.spec
            .chain
            .forward_kinematics(&self.state.joint_positions)
            .expect("state joints are in limits")
    }

    pub fn observation(&self) -> Observation {
        let chain = &self.spec.chain;
        let dof = chain.dof();
        let mut values = Vec::with_capacity(dof + 6);
        for (q, j) in self.state.joint_positions.iter().zip(chain.joints()) {
            values.push(2.0 * (q - j.limit_lo) / (j.limit_hi - j.limit_lo) - 1.0);
        }
        let ee = self.end_effector();
        let center = self.spec.target_region.center();
        let scale = self.spec.target_region.half_diagonal();
        let t = self.state.target;
        for axis in 0..3 {
            values.push((ee[axis] - center[axis]) / scale);
        }
        for axis in 0..3 {
            values.push((t[axis] - ee[axis]) / scale);
        }
        Observation { dof, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::chain::{Joint, JointKind, KinematicChain};
    use crate::kinematics::presets::EnvKind;

    /// Planar two-link arm with full-circle revolute limits plus a vertical
    /// slide; lets tests start from the straight-arm pose q = 0, which the
    /// work-cell presets deliberately exclude.
    fn wide_scara_chain() -> KinematicChain {
        KinematicChain::new(vec![
            Joint {
                kind: JointKind::Revolute,
                axis: [0.0, 0.0, 1.0],
                offset: [0.30, 0.0, 0.0],
                limit_lo: -std::f64::consts::PI,
                limit_hi: std::f64::consts::PI,
            },
            Joint {
                kind: JointKind::Revolute,
                axis: [0.0, 0.0, 1.0],
                offset: [0.25, 0.0, 0.0],
                limit_lo: -std::f64::consts::PI,
                limit_hi: std::f64::consts::PI,
            },
            Joint {
                kind: JointKind::Prismatic,
                axis: [0.0, 0.0, 1.0],
                offset: [0.0, 0.0, 0.0],
                limit_lo: 0.0,
                limit_hi: 0.20,
            },
        ])
        .unwrap()
    }

    #[test]
    fn reset_is_deterministic_per_seed_and_episode() {
        let mut a = ReacherEnv::new(EnvKind::Scara3.spec(), 17);
        let mut b = ReacherEnv::new(EnvKind::Scara3.spec(), 17);
        assert_eq!(a.state().target, b.state().target);
        assert_eq!(a.observation(), b.observation());
        let oa1 = a.reset();
        let ob1 = b.reset();
        assert_eq!(oa1, ob1);
        assert_eq!(a.state().target, b.state().target);

        let c = ReacherEnv::new(EnvKind::Scara3.spec(), 18);
        assert_ne!(a.state().target, c.state().target);
    }

    #[test]
    fn reset_places_joints_at_mid_range() {
        let env = ReacherEnv::new(EnvKind::Scara3.spec(), 3);
        let chain = EnvKind::Scara3.chain();
        assert_eq!(env.state().joint_positions, chain.mid_range());
        let ee = chain.forward_kinematics(&chain.mid_range()).unwrap();
        assert_eq!(env.end_effector(), ee);
        let obs = env.observation();
        assert_eq!(obs.len(), 3 + 6);
        for q in obs.joint_positions() {
            assert!(q.abs() < 1e-12, "mid-range joints normalize to zero");
        }
        let offset = obs.end_effector_offset();
        let err = obs.target_error();
        let center = env.spec().target_region().center();
        let scale = env.spec().target_region().half_diagonal();
        let target = env.state().target;
        for axis in 0..3 {
            let want = (target[axis] - center[axis]) / scale;
            assert!((offset[axis] + err[axis] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_action_preserves_distance() {
        let mut env = ReacherEnv::new(EnvKind::Scara3.spec(), 5);
        let first = env.step(&[0.4, -0.2, 0.1]).unwrap();
        let second = env.step(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(first.distance, second.distance);
        assert_eq!(second.reward, -second.distance);
    }

    #[test]
    fn prismatic_step_toward_overhead_target() {
        let region = TargetRegion::new([0.22, 0.08, 0.04], [0.44, 0.30, 0.16]).unwrap();
        let spec = ReacherEnvSpec::new(wide_scara_chain(), region, 64, -0.01, 0.05).unwrap();
        let mut env = ReacherEnv::new(spec, 0);
        env.reset_with_target([0.55, 0.0, 0.1]).unwrap();
        env.set_joint_positions(&[0.0, 0.0, 0.0]).unwrap();
        let result = env.step(&[0.0, 0.0, 1.0]).unwrap();
        assert!((result.reward + 0.05).abs() < 1e-12);
    }

    #[test]
    fn episode_terminates_exactly_at_horizon() {
        let region = TargetRegion::new([0.22, 0.08, 0.04], [0.44, 0.30, 0.16]).unwrap();
        let spec = ReacherEnvSpec::new(wide_scara_chain(), region, 3, -0.01, 0.02).unwrap();
        let mut env = ReacherEnv::new(spec, 9);
        for step in 1..=3u32 {
            let result = env.step(&[0.1, 0.1, 0.1]).unwrap();
            assert_eq!(result.done, step == 3);
        }
        assert!(matches!(
            env.step(&[0.0, 0.0, 0.0]),
            Err(KinematicsError::EpisodeFinished)
        ));
        env.reset();
        assert!(env.step(&[0.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn step_rejects_bad_actions() {
        let mut env = ReacherEnv::new(EnvKind::Scara3.spec(), 1);
        assert!(matches!(
            env.step(&[0.0, 0.0]),
            Err(KinematicsError::ActionLength { expected: 3, got: 2 })
        ));
        assert!(matches!(
            env.step(&[0.0, f64::INFINITY, 0.0]),
            Err(KinematicsError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        let chain = EnvKind::Scara3.chain();
        let region = TargetRegion::new([0.22, 0.08, 0.04], [0.44, 0.30, 0.16]).unwrap();
        assert!(matches!(
            ReacherEnvSpec::new(chain.clone(), region, 0, -0.01, 0.02),
            Err(KinematicsError::BadHorizon)
        ));
        assert!(matches!(
            ReacherEnvSpec::new(chain.clone(), region, 8, 0.5, 0.02),
            Err(KinematicsError::BadRewardThreshold(_))
        ));
        assert!(matches!(
            ReacherEnvSpec::new(chain.clone(), region, 8, -0.01, 0.0),
            Err(KinematicsError::BadActionScale(_))
        ));
        let unreachable = TargetRegion::new([0.9, 0.9, 0.9], [1.1, 1.1, 1.1]).unwrap();
        assert!(matches!(
            ReacherEnvSpec::new(chain, unreachable, 8, -0.01, 0.02),
            Err(KinematicsError::TargetRegionUnreachable { .. })
        ));
    }

    #[test]
    fn target_region_validation() {
        assert!(TargetRegion::new([0.0, 0.0, 0.0], [1.0, 0.0, 1.0]).is_err());
        assert!(TargetRegion::new([0.0, f64::NAN, 0.0], [1.0, 1.0, 1.0]).is_err());
        let region = TargetRegion::new([0.0, 0.1, 0.2], [1.0, 1.1, 1.2]).unwrap();
        for (c, want) in region.center().iter().zip([0.5, 0.6, 0.7]) {
            assert!((c - want).abs() < 1e-12);
        }
        let want_half_diag = (3.0f64 * 0.25).sqrt();
        assert!((region.half_diagonal() - want_half_diag).abs() < 1e-12);
        assert_eq!(region.corners()[0], [0.0, 0.1, 0.2]);
        assert_eq!(region.corners()[7], [1.0, 1.1, 1.2]);
    }
}
