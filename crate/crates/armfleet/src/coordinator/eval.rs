//! Industrial-style scoring of a trained policy: accuracy is how close the
//! end effector lands to commanded targets, repeatability is how tightly
//! the landings cluster around their own mean error. Both follow the RMS
//! convention and are reported in millimeters.

use crate::kinematics::ReacherEnvSpec;
use crate::policy::{MlpSpec, ParamVector};
use crate::rng::{stream, tag};

use super::CoordError;

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// RMS distance between target and final position, in mm.
    pub accuracy_mm: f64,
    /// RMS scatter of the per-run errors around their mean error, in mm. A
    /// policy with a constant bias scores poorly on accuracy yet perfectly
    /// here.
    pub repeatability_mm: f64,
    pub targets: Vec<[f64; 3]>,
    pub final_positions: Vec<[f64; 3]>,
}

impl AccuracyReport {
    pub fn from_positions(
        targets: Vec<[f64; 3]>,
        final_positions: Vec<[f64; 3]>,
    ) -> Result<Self, CoordError> {
        let runs = targets.len();
        if runs != final_positions.len() || runs < 2 {
            return Err(CoordError::TooFewRuns {
                got: runs.min(final_positions.len()),
            });
        }

        let errors: Vec<[f64; 3]> = targets
            .iter()
            .zip(&final_positions)
            .map(|(t, f)| [f[0] - t[0], f[1] - t[1], f[2] - t[2]])
            .collect();
        let accuracy_mm = rms(errors.iter().map(norm_squared)) * 1000.0;

        let mut mean_error = [0.0; 3];
        for e in &errors {
            for (m, v) in mean_error.iter_mut().zip(e) {
                *m += v / runs as f64;
            }
        }
        let repeatability_mm = rms(errors.iter().map(|e| {
            norm_squared(&[
                e[0] - mean_error[0],
                e[1] - mean_error[1],
                e[2] - mean_error[2],
            ])
        })) * 1000.0;

        Ok(Self {
            accuracy_mm,
            repeatability_mm,
            targets,
            final_positions,
        })
    }
}

fn norm_squared(v: &[f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

fn rms(squares: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = squares.len() as f64;
    (squares.sum::<f64>() / n).sqrt()
}

/// Runs the policy deterministically (mean actions, no exploration noise)
/// against `n_runs` seeded targets and scores the landings. Runs end at
/// the episode horizon or wherever the environment declares the episode
/// done, whichever comes first.
pub fn evaluate_policy(
    params: &ParamVector,
    env_spec: &ReacherEnvSpec,
    n_runs: usize,
    seed: u64,
) -> Result<AccuracyReport, CoordError> {
    if n_runs < 2 {
        return Err(CoordError::TooFewRuns { got: n_runs });
    }
    let mlp = MlpSpec::new(env_spec.obs_dim(), env_spec.action_dim())?;
    if *mlp.manifest() != **params.manifest() {
        return Err(CoordError::ManifestMismatch {
            who: "evaluated parameters".to_string(),
            detail: mlp.manifest().describe_mismatch(params.manifest()),
        });
    }

    let mut env = crate::kinematics::ReacherEnv::new(env_spec.clone(), seed);
    let mut targets = Vec::with_capacity(n_runs);
    let mut final_positions = Vec::with_capacity(n_runs);
    for run in 0..n_runs {
        let target = env_spec
            .target_region()
            .sample(&mut stream(seed, &[tag::EVAL, run as u64]));
        let mut obs = env.reset_with_target(target)?;
        for _ in 0..env_spec.horizon() {
            let fwd = mlp.forward_batch(params, obs.as_slice(), 1)?;
            let result = env.step(&fwd.means)?;
            if result.done {
                break;
            }
            obs = result.observation;
        }
        targets.push(target);
        final_positions.push(env.end_effector());
    }
    AccuracyReport::from_positions(targets, final_positions)
}
