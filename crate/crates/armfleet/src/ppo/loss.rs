//! PPO loss: clipped surrogate, adaptive KL penalty, value regression, and
//! the analytic gradient of the whole objective.

use crate::policy::{entropy, kl_divergence, log_prob, MlpSpec, ParamVector};

use super::advantage::ProcessedBatch;
use super::config::PpoConfig;
use super::PpoError;

/// All loss terms from one evaluation. `total` is exactly
/// `surrogate + kl_coeff * mean_kl + vf_loss_coeff * value_loss
///  - entropy_coeff * entropy`, and `kl_penalty` is `kl_coeff * mean_kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub surrogate: f64,
    pub kl_penalty: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
}

impl LossBreakdown {
    /// Component-wise arithmetic mean; used for per-epoch aggregates.
    pub fn component_mean(records: &[LossBreakdown]) -> LossBreakdown {
        let n = records.len() as f64;
        let mut acc = LossBreakdown {
            surrogate: 0.0,
            kl_penalty: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            total: 0.0,
            mean_kl: 0.0,
            clip_fraction: 0.0,
        };
        for r in records {
            acc.surrogate += r.surrogate;
            acc.kl_penalty += r.kl_penalty;
            acc.value_loss += r.value_loss;
            acc.entropy += r.entropy;
            acc.total += r.total;
            acc.mean_kl += r.mean_kl;
            acc.clip_fraction += r.clip_fraction;
        }
        acc.surrogate /= n;
        acc.kl_penalty /= n;
        acc.value_loss /= n;
        acc.entropy /= n;
        acc.total /= n;
        acc.mean_kl /= n;
        acc.clip_fraction /= n;
        acc
    }
}

/// Distribution of the policy the batch was collected under, evaluated on
/// the batch observations once per update and reused by every minibatch.
#[derive(Debug, Clone)]
pub struct OldPolicyStats {
    /// Row-major n x action_dim means.
    pub means: Vec<f64>,
    /// Clamped log standard deviations, length action_dim.
    pub log_std: Vec<f64>,
}

impl OldPolicyStats {
    pub fn compute(
        spec: &MlpSpec,
        params: &ParamVector,
        batch: &ProcessedBatch,
    ) -> Result<Self, PpoError> {
        if batch.is_empty() {
            return Err(PpoError::EmptyBatch);
        }
        let fwd = spec.forward_batch(params, &batch.observations, batch.len())?;
        Ok(Self {
            means: fwd.means,
            log_std: fwd.log_std,
        })
    }
}

/// Borrowed, column-aligned slice of a processed batch plus the matching
/// old-policy rows; the unit the loss is evaluated over.
#[derive(Debug, Clone, Copy)]
pub struct BatchView<'a> {
    pub n: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: &'a [f64],
    pub actions: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub value_targets: &'a [f64],
    pub old_means: &'a [f64],
    pub old_log_std: &'a [f64],
}

impl ProcessedBatch {
    /// View over the whole batch.
    pub fn view<'a>(&'a self, old: &'a OldPolicyStats) -> BatchView<'a> {
        BatchView {
            n: self.len(),
            obs_dim: self.obs_dim,
            action_dim: self.action_dim,
            observations: &self.observations,
            actions: &self.actions,
            old_log_probs: &self.old_log_probs,
            advantages: &self.advantages,
            value_targets: &self.value_targets,
            old_means: &old.means,
            old_log_std: &old.log_std,
        }
    }
}

/// Full-batch loss of `params` against the policy `old_params` that
/// produced `batch`.
pub fn ppo_loss(
    spec: &MlpSpec,
    params: &ParamVector,
    old_params: &ParamVector,
    batch: &ProcessedBatch,
    cfg: &PpoConfig,
) -> Result<LossBreakdown, PpoError> {
    let old = OldPolicyStats::compute(spec, old_params, batch)?;
    evaluate(spec, params, &batch.view(&old), cfg, None)
}

/// Loss and its gradient; `grad` is overwritten, not accumulated into.
pub fn loss_and_grad(
    spec: &MlpSpec,
    params: &ParamVector,
    view: &BatchView<'_>,
    cfg: &PpoConfig,
    grad: &mut ParamVector,
) -> Result<LossBreakdown, PpoError> {
    grad.values_mut().fill(0.0);
    evaluate(spec, params, view, cfg, Some(grad))
}

fn evaluate(
    spec: &MlpSpec,
    params: &ParamVector,
    view: &BatchView<'_>,
    cfg: &PpoConfig,
    grad: Option<&mut ParamVector>,
) -> Result<LossBreakdown, PpoError> {
    let n = view.n;
    if n == 0 {
        return Err(PpoError::EmptyBatch);
    }
    let a_dim = view.action_dim;
    assert_eq!(a_dim, spec.action_dim);
    let nf = n as f64;
    let want_grad = grad.is_some();

    let fwd = spec.forward_batch(params, view.observations, n)?;
    let log_std = &fwd.log_std;
    // 1/sigma^2 of the new policy; old variances for the KL term.
    let inv_var: Vec<f64> = log_std.iter().map(|&ls| (-2.0 * ls).exp()).collect();
    let old_var: Vec<f64> = view.old_log_std.iter().map(|&ls| (2.0 * ls).exp()).collect();

    let mut surrogate_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut value_sum = 0.0;
    let mut clip_count = 0usize;
    let mut d_means = vec![0.0; if want_grad { n * a_dim } else { 0 }];
    let mut d_values = vec![0.0; if want_grad { n } else { 0 }];
    let mut d_log_std = vec![0.0; a_dim];

    for i in 0..n {
        let mean_i = &fwd.means[i * a_dim..(i + 1) * a_dim];
        let action_i = &view.actions[i * a_dim..(i + 1) * a_dim];
        let old_mean_i = &view.old_means[i * a_dim..(i + 1) * a_dim];

        let lp_new = log_prob(mean_i, log_std, action_i);
        let ratio = (lp_new - view.old_log_probs[i]).exp();
        if !ratio.is_finite() {
            return Err(PpoError::NonFiniteRatio { sample: i });
        }
        let adv = view.advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
        let clip_active = clipped < unclipped;
        if clip_active {
            clip_count += 1;
        }
        surrogate_sum -= unclipped.min(clipped);
        kl_sum += kl_divergence(old_mean_i, view.old_log_std, mean_i, log_std);
        let v_diff = fwd.values[i] - view.value_targets[i];
        value_sum += v_diff * v_diff;

        if want_grad {
            // d(-min(u, c))/d(ratio) is -adv when the unclipped branch is
            // active and 0 when the clamp binds; through ratio =
            // exp(lp_new - lp_old), d(ratio)/d(lp_new) = ratio.
            let g_lp = if clip_active { 0.0 } else { -adv * ratio / nf };
            let kl_scale = cfg.kl_coeff / nf;
            for j in 0..a_dim {
                let resid = action_i[j] - mean_i[j];
                d_means[i * a_dim + j] += g_lp * resid * inv_var[j];
                d_log_std[j] += g_lp * (resid * resid * inv_var[j] - 1.0);
                let m_diff = mean_i[j] - old_mean_i[j];
                d_means[i * a_dim + j] += kl_scale * m_diff * inv_var[j];
                d_log_std[j] += kl_scale * (1.0 - (old_var[j] + m_diff * m_diff) * inv_var[j]);
            }
            d_values[i] = cfg.vf_loss_coeff * 2.0 * v_diff / nf;
        }
    }

    let surrogate = surrogate_sum / nf;
    let mean_kl = kl_sum / nf;
    let value_loss = value_sum / nf;
    let policy_entropy = entropy(log_std);
    let kl_penalty = cfg.kl_coeff * mean_kl;
    let total = surrogate + cfg.kl_coeff * mean_kl + cfg.vf_loss_coeff * value_loss
        - cfg.entropy_coeff * policy_entropy;
    for (term, v) in [
        ("surrogate", surrogate),
        ("kl_penalty", kl_penalty),
        ("value_loss", value_loss),
        ("entropy", policy_entropy),
        ("total", total),
    ] {
        if !v.is_finite() {
            return Err(PpoError::NonFiniteLoss { term });
        }
    }

    if let Some(grad) = grad {
        for d in d_log_std.iter_mut() {
            *d -= cfg.entropy_coeff;
        }
        spec.backward_batch(params, &fwd, &d_means, &d_values, &d_log_std, grad)?;
    }

    Ok(LossBreakdown {
        surrogate,
        kl_penalty,
        value_loss,
        entropy: policy_entropy,
        total,
        mean_kl,
        clip_fraction: clip_count as f64 / nf,
    })
}

/// Test fixture: batch whose old_log_probs are consistent with `params`, so
/// the probability ratio starts at exactly 1.
#[cfg(test)]
pub(crate) fn consistent_test_batch(
    spec: &MlpSpec,
    params: &ParamVector,
    n: usize,
    seed: u64,
) -> ProcessedBatch {
    use rand::Rng;

    let mut rng = crate::rng::stream(seed, &[crate::rng::tag::EVAL]);
    let mut observations = Vec::with_capacity(n * spec.input_dim);
    for _ in 0..n * spec.input_dim {
        observations.push(rng.gen_range(-1.0..1.0));
    }
    let fwd = spec.forward_batch(params, &observations, n).unwrap();
    let mut actions = Vec::with_capacity(n * spec.action_dim);
    let mut old_log_probs = Vec::with_capacity(n);
    let mut advantages = Vec::with_capacity(n);
    for i in 0..n {
        let mean_i = &fwd.means[i * spec.action_dim..(i + 1) * spec.action_dim];
        let mut action = Vec::with_capacity(spec.action_dim);
        for &m in mean_i {
            action.push(m + rng.gen_range(-0.5..0.5));
        }
        old_log_probs.push(log_prob(mean_i, &fwd.log_std, &action));
        actions.extend_from_slice(&action);
        advantages.push(rng.gen_range(-1.0..1.0));
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let std =
        (advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64).sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
    let value_targets = fwd.values.clone();
    ProcessedBatch {
        obs_dim: spec.input_dim,
        action_dim: spec.action_dim,
        observations,
        actions,
        old_log_probs,
        advantages,
        value_targets,
    }
}
