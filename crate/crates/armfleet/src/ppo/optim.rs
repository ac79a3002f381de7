//! Multi-epoch minibatch optimization of the PPO objective, with
//! adaptive-moment or plain gradient steps and KL-coefficient adaptation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::policy::{MlpSpec, ParamVector};

use super::advantage::ProcessedBatch;
use super::config::PpoConfig;
use super::loss::{loss_and_grad, BatchView, LossBreakdown, OldPolicyStats};
use super::PpoError;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Epochs stop early once an epoch's mean KL exceeds this multiple of
/// kl_target; the penalty coefficient alone reacts too slowly to runaway
/// steps inside a single update.
const KL_ABORT_FACTOR: f64 = 4.0;

pub const KL_COEFF_MIN: f64 = 1e-4;
pub const KL_COEFF_MAX: f64 = 64.0;

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected adaptive-moment step, in place.
pub fn adam_step(values: &mut [f64], grad: &[f64], stepsize: f64, state: &mut AdamState) {
    assert_eq!(values.len(), grad.len());
    assert_eq!(values.len(), state.m.len());
    state.t += 1;
    let bias1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..values.len() {
        let g = grad[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        values[i] -= stepsize * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One vanilla gradient step, in place.
pub fn plain_sgd_step(values: &mut [f64], grad: &[f64], stepsize: f64) {
    assert_eq!(values.len(), grad.len());
    for (v, &g) in values.iter_mut().zip(grad) {
        *v -= stepsize * g;
    }
}

/// Runs num_sgd_iter epochs of shuffled full minibatches over `batch` and
/// returns the updated parameters (version bumped by one) plus one
/// component-mean loss record per completed epoch. Partial trailing
/// minibatches are dropped, so the batch must hold at least sgd_batchsize
/// samples.
pub fn sgd_update(
    spec: &MlpSpec,
    params: &ParamVector,
    batch: &ProcessedBatch,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<(ParamVector, Vec<LossBreakdown>), PpoError> {
    cfg.validate()?;
    let n = batch.len();
    if n == 0 {
        return Err(PpoError::EmptyBatch);
    }
    let batchsize = cfg.sgd_batchsize as usize;
    if n < batchsize {
        return Err(PpoError::BatchTooSmall { len: n, batchsize });
    }

    // The sampling distribution is frozen once; every minibatch measures
    // ratios and KL against it rather than against the previous minibatch.
    let old = OldPolicyStats::compute(spec, params, batch)?;

    let obs_dim = batch.obs_dim;
    let action_dim = batch.action_dim;
    let mut new_params = params.clone();
    let mut grad = ParamVector::zeros(spec.manifest());
    let mut adam = AdamState::new(new_params.len());

    let mut indices: Vec<usize> = (0..n).collect();
    let mut mb_obs = vec![0.0; batchsize * obs_dim];
    let mut mb_actions = vec![0.0; batchsize * action_dim];
    let mut mb_old_means = vec![0.0; batchsize * action_dim];
    let mut mb_old_log_probs = vec![0.0; batchsize];
    let mut mb_advantages = vec![0.0; batchsize];
    let mut mb_targets = vec![0.0; batchsize];

    let mut epoch_records = Vec::with_capacity(cfg.num_sgd_iter as usize);
    let mut minibatch_records = Vec::with_capacity(n / batchsize);
    for _ in 0..cfg.num_sgd_iter {
        indices.shuffle(rng);
        minibatch_records.clear();
        for chunk in indices.chunks_exact(batchsize) {
            for (row, &src) in chunk.iter().enumerate() {
                mb_obs[row * obs_dim..(row + 1) * obs_dim]
                    .copy_from_slice(&batch.observations[src * obs_dim..(src + 1) * obs_dim]);
                mb_actions[row * action_dim..(row + 1) * action_dim]
                    .copy_from_slice(&batch.actions[src * action_dim..(src + 1) * action_dim]);
                mb_old_means[row * action_dim..(row + 1) * action_dim]
                    .copy_from_slice(&old.means[src * action_dim..(src + 1) * action_dim]);
                mb_old_log_probs[row] = batch.old_log_probs[src];
                mb_advantages[row] = batch.advantages[src];
                mb_targets[row] = batch.value_targets[src];
            }
            let view = BatchView {
                n: batchsize,
                obs_dim,
                action_dim,
                observations: &mb_obs,
                actions: &mb_actions,
                old_log_probs: &mb_old_log_probs,
                advantages: &mb_advantages,
                value_targets: &mb_targets,
                old_means: &mb_old_means,
                old_log_std: &old.log_std,
            };
            let record = loss_and_grad(spec, &new_params, &view, cfg, &mut grad)?;
            if cfg.plain_sgd {
                plain_sgd_step(new_params.values_mut(), grad.values(), cfg.sgd_stepsize);
            } else {
                adam_step(
                    new_params.values_mut(),
                    grad.values(),
                    cfg.sgd_stepsize,
                    &mut adam,
                );
            }
            minibatch_records.push(record);
        }
        let epoch = LossBreakdown::component_mean(&minibatch_records);
        epoch_records.push(epoch);
        if epoch.mean_kl > KL_ABORT_FACTOR * cfg.kl_target {
            break;
        }
    }

    new_params.bump_version();
    Ok((new_params, epoch_records))
}

/// Doubles the coefficient when observed KL overshoots 1.5x the target,
/// halves it below target/1.5, and clamps to [KL_COEFF_MIN, KL_COEFF_MAX].
pub fn adapt_kl_coeff(kl_coeff: f64, observed_kl: f64, kl_target: f64) -> f64 {
    let next = if observed_kl > 1.5 * kl_target {
        kl_coeff * 2.0
    } else if observed_kl < kl_target / 1.5 {
        kl_coeff / 2.0
    } else {
        kl_coeff
    };
    next.clamp(KL_COEFF_MIN, KL_COEFF_MAX)
}
