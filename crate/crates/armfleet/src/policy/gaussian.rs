//! Diagonal-Gaussian density math shared by rollout sampling and the PPO
//! loss. All functions take parallel slices of per-dimension parameters.

use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.8378770664093453;

/// Draws `action = mean + exp(log_std) * eps` with standard-normal `eps`
/// and returns the action together with its log density. The action is not
/// clamped; the environment clamps.
pub fn sample_action(mean: &[f64], log_std: &[f64], rng: &mut impl Rng) -> (Vec<f64>, f64) {
    assert_eq!(mean.len(), log_std.len());
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + ls.exp() * eps
        })
        .collect();
    let lp = log_prob(mean, log_std, &action);
    (action, lp)
}

/// Log density of `action` under the diagonal Gaussian.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    assert_eq!(mean.len(), log_std.len());
    assert_eq!(mean.len(), action.len());
    let mut lp = 0.0;
    for ((&m, &ls), &a) in mean.iter().zip(log_std).zip(action) {
        let z = (a - m) / ls.exp();
        lp += -ls - 0.5 * LN_2PI - 0.5 * z * z;
    }
    lp
}

/// KL(old || new) between two diagonal Gaussians.
pub fn kl_divergence(
    old_mean: &[f64],
    old_log_std: &[f64],
    new_mean: &[f64],
    new_log_std: &[f64],
) -> f64 {
    assert_eq!(old_mean.len(), old_log_std.len());
    assert_eq!(old_mean.len(), new_mean.len());
    assert_eq!(old_mean.len(), new_log_std.len());
    let mut kl = 0.0;
    for i in 0..old_mean.len() {
        let var_old = (2.0 * old_log_std[i]).exp();
        let var_new = (2.0 * new_log_std[i]).exp();
        let diff = old_mean[i] - new_mean[i];
        kl += new_log_std[i] - old_log_std[i] + (var_old + diff * diff) / (2.0 * var_new) - 0.5;
    }
    kl
}

/// Differential entropy of the diagonal Gaussian.
pub fn entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|&ls| ls + 0.5 * (LN_2PI + 1.0))
        .sum()
}
