//! Generalized advantage estimation over collected rollouts.

use super::PpoError;

/// Column-aligned transitions collected by one worker in one round.
/// `episode_boundaries` holds exclusive end offsets of whole episodes in
/// strictly increasing order, the last equal to `total_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub episode_boundaries: Vec<usize>,
    pub total_steps: usize,
    pub collection_seconds: f64,
}

impl RolloutBatch {
    pub fn validate(&self) -> Result<(), PpoError> {
        let n = self.total_steps;
        if n == 0 {
            return Err(PpoError::EmptyBatch);
        }
        let skew = |name: &str, got: usize, want: usize| {
            PpoError::ColumnSkew(format!("{name} has {got} entries for {want} steps"))
        };
        if self.observations.len() != n * self.obs_dim {
            return Err(skew("observations", self.observations.len(), n));
        }
        if self.actions.len() != n * self.action_dim {
            return Err(skew("actions", self.actions.len(), n));
        }
        for (name, len) in [
            ("log_probs", self.log_probs.len()),
            ("rewards", self.rewards.len()),
            ("values", self.values.len()),
            ("dones", self.dones.len()),
        ] {
            if len != n {
                return Err(skew(name, len, n));
            }
        }
        if self.episode_boundaries.is_empty()
            || self.episode_boundaries.windows(2).any(|w| w[0] >= w[1])
            || *self.episode_boundaries.last().expect("non-empty") != n
        {
            return Err(PpoError::ColumnSkew(format!(
                "episode boundaries {:?} do not partition {n} steps",
                self.episode_boundaries
            )));
        }
        for (t, &done) in self.dones.iter().enumerate() {
            let at_boundary = self.episode_boundaries.contains(&(t + 1));
            if done != at_boundary {
                return Err(PpoError::ColumnSkew(format!(
                    "done flag at step {t} disagrees with episode boundaries"
                )));
            }
        }
        Ok(())
    }

    /// Mean reward per environment step over the whole batch.
    pub fn mean_step_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.total_steps as f64
    }
}

/// Learner-ready batch: advantages are normalized, value targets are not.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedBatch {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl ProcessedBatch {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }
}

/// Computes GAE advantages and value targets per episode, then normalizes
/// the advantages to sample mean 0 and std 1 across the whole batch.
///
/// Episode tails bootstrap with V = 0 whether the episode ended terminally
/// or was cut by the horizon; value targets are advantage + value and are
/// computed before normalization.
pub fn compute_advantages(
    rollout: &RolloutBatch,
    gamma: f64,
    lambda: f64,
) -> Result<ProcessedBatch, PpoError> {
    rollout.validate()?;
    if let Some(index) = rollout.rewards.iter().position(|v| !v.is_finite()) {
        return Err(PpoError::NonFiniteInput {
            column: "rewards",
            index,
        });
    }
    if let Some(index) = rollout.values.iter().position(|v| !v.is_finite()) {
        return Err(PpoError::NonFiniteInput {
            column: "values",
            index,
        });
    }
    let n = rollout.total_steps;
    let mut advantages = vec![0.0; n];
    let mut value_targets = vec![0.0; n];
    let mut start = 0;
    for &end in &rollout.episode_boundaries {
        let mut running = 0.0;
        let mut next_value = 0.0;
        for t in (start..end).rev() {
            let delta = rollout.rewards[t] + gamma * next_value - rollout.values[t];
            running = delta + gamma * lambda * running;
            advantages[t] = running;
            value_targets[t] = running + rollout.values[t];
            next_value = rollout.values[t];
        }
        start = end;
    }
    normalize(&mut advantages);
    Ok(ProcessedBatch {
        obs_dim: rollout.obs_dim,
        action_dim: rollout.action_dim,
        observations: rollout.observations.clone(),
        actions: rollout.actions.clone(),
        old_log_probs: rollout.log_probs.clone(),
        advantages,
        value_targets,
    })
}

/// In-place shift to mean 0 and scale to std 1 (population std). A batch
/// with zero variance is set to all zeros instead of dividing by zero.
fn normalize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 0.0 {
        for x in xs.iter_mut() {
            *x = (*x - mean) / std;
        }
    } else {
        xs.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_from(rewards: Vec<f64>, values: Vec<f64>, boundaries: Vec<usize>) -> RolloutBatch {
        let n = rewards.len();
        let mut dones = vec![false; n];
        for &b in &boundaries {
            dones[b - 1] = true;
        }
        RolloutBatch {
            obs_dim: 2,
            action_dim: 1,
            observations: vec![0.0; n * 2],
            actions: vec![0.0; n],
            log_probs: vec![0.0; n],
            rewards,
            values,
            dones,
            episode_boundaries: boundaries,
            total_steps: n,
            collection_seconds: 0.0,
        }
    }

    #[test]
    fn single_terminal_transition() {
        let rollout = batch_from(vec![-0.4], vec![0.0], vec![1]);
        let processed = compute_advantages(&rollout, 0.995, 0.95).unwrap();
        assert_eq!(processed.value_targets, vec![-0.4]);
        assert_eq!(processed.advantages, vec![0.0]);
    }

    #[test]
    fn two_step_episode_with_lambda_one() {
        let rollout = batch_from(vec![1.0, 1.0], vec![0.0, 0.0], vec![2]);
        let processed = compute_advantages(&rollout, 0.995, 1.0).unwrap();
        assert!((processed.value_targets[0] - 1.995).abs() < 1e-15);
        assert!((processed.value_targets[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_holds_on_random_batches() {
        let mut rewards = Vec::new();
        let mut values = Vec::new();
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..257 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            rewards.push(-((state >> 11) as f64 / (1u64 << 53) as f64));
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            values.push((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
        }
        let rollout = batch_from(rewards, values, vec![100, 200, 257]);
        let processed = compute_advantages(&rollout, 0.995, 0.95).unwrap();
        let n = processed.advantages.len() as f64;
        let mean = processed.advantages.iter().sum::<f64>() / n;
        let std =
            (processed.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-9, "std {std}");
    }

    #[test]
    fn episodes_do_not_leak_into_each_other() {
        // Two single-step episodes must see the same bootstrap as two
        // separate batches.
        let joint = batch_from(vec![-0.3, -0.7], vec![0.1, 0.2], vec![1, 2]);
        let processed = compute_advantages(&joint, 0.9, 0.9).unwrap();
        assert!((processed.value_targets[0] - (-0.3)).abs() < 1e-15);
        assert!((processed.value_targets[1] - (-0.7)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_inputs_and_skewed_columns() {
        let rollout = batch_from(vec![f64::NAN], vec![0.0], vec![1]);
        assert!(matches!(
            compute_advantages(&rollout, 0.995, 0.95),
            Err(PpoError::NonFiniteInput { column: "rewards", index: 0 })
        ));

        let mut bad = batch_from(vec![-0.1, -0.2], vec![0.0, 0.0], vec![2]);
        bad.rewards.pop();
        assert!(matches!(
            compute_advantages(&bad, 0.995, 0.95),
            Err(PpoError::ColumnSkew(_))
        ));

        let mut bad = batch_from(vec![-0.1, -0.2], vec![0.0, 0.0], vec![2]);
        bad.dones[0] = true;
        assert!(matches!(bad.validate(), Err(PpoError::ColumnSkew(_))));
    }

    #[test]
    fn mean_step_reward_is_the_column_mean() {
        let rollout = batch_from(vec![-0.4, -0.2, -0.6], vec![0.0; 3], vec![3]);
        assert!((rollout.mean_step_reward() + 0.4).abs() < 1e-15);
    }
}
