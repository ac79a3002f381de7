//! Learner configuration and its flat key-value file format.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("config field {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// All learner knobs. `timesteps_per_batch` is the total per-round batch
/// target across the fleet in the original scheme; per-worker collection
/// here is governed by `min_steps_per_task`, and the field is kept so config
/// files stay schema-compatible and the batchsize invariant stays checkable.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub horizon: u32,
    pub kl_coeff: f64,
    pub kl_target: f64,
    pub num_sgd_iter: u32,
    pub sgd_stepsize: f64,
    pub sgd_batchsize: u32,
    pub vf_loss_coeff: f64,
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub timesteps_per_batch: u32,
    pub min_steps_per_task: u32,
    pub rollout_batchsize: u32,
    pub num_workers: u32,
    pub entropy_coeff: f64,
    /// Take raw gradient steps instead of adaptive-moment steps.
    pub plain_sgd: bool,
    /// Local updates a worker performs per round before returning its model.
    pub local_rounds: u32,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            horizon: 2048,
            kl_coeff: 0.2,
            kl_target: 0.01,
            num_sgd_iter: 30,
            sgd_stepsize: 5e-5,
            sgd_batchsize: 128,
            vf_loss_coeff: 1.0,
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            timesteps_per_batch: 16000,
            min_steps_per_task: 2048,
            rollout_batchsize: 1,
            num_workers: 1,
            entropy_coeff: 0.0,
            plain_sgd: false,
            local_rounds: 1,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("gamma", format!("must be in (0, 1], got {}", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be >= 1"));
        }
        if !(self.kl_coeff.is_finite() && self.kl_coeff >= 0.0) {
            return Err(invalid("kl_coeff", format!("must be finite and >= 0, got {}", self.kl_coeff)));
        }
        if !(self.kl_target.is_finite() && self.kl_target > 0.0) {
            return Err(invalid("kl_target", format!("must be finite and > 0, got {}", self.kl_target)));
        }
        if self.num_sgd_iter == 0 {
            return Err(invalid("num_sgd_iter", "must be >= 1"));
        }
        if !(self.sgd_stepsize.is_finite() && self.sgd_stepsize > 0.0) {
            return Err(invalid("sgd_stepsize", format!("must be finite and > 0, got {}", self.sgd_stepsize)));
        }
        if self.sgd_batchsize == 0 {
            return Err(invalid("sgd_batchsize", "must be >= 1"));
        }
        if self.sgd_batchsize > self.timesteps_per_batch {
            return Err(invalid(
                "sgd_batchsize",
                format!(
                    "must be <= timesteps_per_batch ({} > {})",
                    self.sgd_batchsize, self.timesteps_per_batch
                ),
            ));
        }
        if !(self.vf_loss_coeff.is_finite() && self.vf_loss_coeff >= 0.0) {
            return Err(invalid("vf_loss_coeff", format!("must be finite and >= 0, got {}", self.vf_loss_coeff)));
        }
        // Infinity is allowed: it disables clipping.
        if !(self.clip_epsilon > 0.0) {
            return Err(invalid("clip_epsilon", format!("must be > 0, got {}", self.clip_epsilon)));
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return Err(invalid("gae_lambda", format!("must be in [0, 1], got {}", self.gae_lambda)));
        }
        if self.min_steps_per_task == 0 {
            return Err(invalid("min_steps_per_task", "must be >= 1"));
        }
        if self.rollout_batchsize != 1 {
            return Err(invalid(
                "rollout_batchsize",
                format!("only 1 environment instance per worker is supported, got {}", self.rollout_batchsize),
            ));
        }
        if self.num_workers == 0 {
            return Err(invalid("num_workers", "must be >= 1"));
        }
        if !(self.entropy_coeff.is_finite() && self.entropy_coeff >= 0.0) {
            return Err(invalid("entropy_coeff", format!("must be finite and >= 0, got {}", self.entropy_coeff)));
        }
        if self.local_rounds == 0 {
            return Err(invalid("local_rounds", "must be >= 1"));
        }
        Ok(())
    }

    /// Serializes to the flat `key: value` file format; inverse of
    /// [`parse_ppo_config`].
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "gamma: {}", self.gamma);
        let _ = writeln!(out, "horizon: {}", self.horizon);
        let _ = writeln!(out, "kl_coeff: {}", self.kl_coeff);
        let _ = writeln!(out, "kl_target: {}", self.kl_target);
        let _ = writeln!(out, "num_sgd_iter: {}", self.num_sgd_iter);
        let _ = writeln!(out, "sgd_stepsize: {}", self.sgd_stepsize);
        let _ = writeln!(out, "sgd_batchsize: {}", self.sgd_batchsize);
        let _ = writeln!(out, "vf_loss_coeff: {}", self.vf_loss_coeff);
        let _ = writeln!(out, "clip_epsilon: {}", self.clip_epsilon);
        let _ = writeln!(out, "gae_lambda: {}", self.gae_lambda);
        let _ = writeln!(out, "timesteps_per_batch: {}", self.timesteps_per_batch);
        let _ = writeln!(out, "min_steps_per_task: {}", self.min_steps_per_task);
        let _ = writeln!(out, "rollout_batchsize: {}", self.rollout_batchsize);
        let _ = writeln!(out, "num_workers: {}", self.num_workers);
        let _ = writeln!(out, "entropy_coeff: {}", self.entropy_coeff);
        let _ = writeln!(out, "plain_sgd: {}", self.plain_sgd);
        let _ = writeln!(out, "local_rounds: {}", self.local_rounds);
        out
    }
}

/// Parses the flat `key: value` learner config format. Keys may appear in
/// any order; omitted keys keep their defaults; unknown keys are errors.
/// Blank lines and `#` comments are ignored.
pub fn parse_ppo_config(text: &str) -> Result<PpoConfig, ConfigError> {
    let mut cfg = PpoConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(ConfigError::Parse {
                line: line_no,
                reason: "expected key: value".to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let parse_f64 = || -> Result<f64, ConfigError> {
            value.parse().map_err(|_| ConfigError::Parse {
                line: line_no,
                reason: format!("invalid number {value:?} for {key}"),
            })
        };
        let parse_u32 = || -> Result<u32, ConfigError> {
            value.parse().map_err(|_| ConfigError::Parse {
                line: line_no,
                reason: format!("invalid integer {value:?} for {key}"),
            })
        };
        match key {
            "gamma" => cfg.gamma = parse_f64()?,
            "horizon" => cfg.horizon = parse_u32()?,
            "kl_coeff" => cfg.kl_coeff = parse_f64()?,
            "kl_target" => cfg.kl_target = parse_f64()?,
            "num_sgd_iter" => cfg.num_sgd_iter = parse_u32()?,
            "sgd_stepsize" => cfg.sgd_stepsize = parse_f64()?,
            "sgd_batchsize" => cfg.sgd_batchsize = parse_u32()?,
            "vf_loss_coeff" => cfg.vf_loss_coeff = parse_f64()?,
            "clip_epsilon" => cfg.clip_epsilon = parse_f64()?,
            "gae_lambda" => cfg.gae_lambda = parse_f64()?,
            "timesteps_per_batch" => cfg.timesteps_per_batch = parse_u32()?,
            "min_steps_per_task" => cfg.min_steps_per_task = parse_u32()?,
            "rollout_batchsize" => cfg.rollout_batchsize = parse_u32()?,
            "num_workers" => cfg.num_workers = parse_u32()?,
            "entropy_coeff" => cfg.entropy_coeff = parse_f64()?,
            "plain_sgd" => {
                cfg.plain_sgd = value.parse().map_err(|_| ConfigError::Parse {
                    line: line_no,
                    reason: format!("invalid boolean {value:?} for plain_sgd"),
                })?
            }
            "local_rounds" => cfg.local_rounds = parse_u32()?,
            other => {
                return Err(ConfigError::Parse {
                    line: line_no,
                    reason: format!("unknown key {other:?}"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = PpoConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.gamma, 0.995);
        assert_eq!(cfg.horizon, 2048);
        assert_eq!(cfg.kl_coeff, 0.2);
        assert_eq!(cfg.num_sgd_iter, 30);
        assert_eq!(cfg.sgd_stepsize, 5e-5);
        assert_eq!(cfg.sgd_batchsize, 128);
        assert_eq!(cfg.vf_loss_coeff, 1.0);
        assert_eq!(cfg.timesteps_per_batch, 16000);
        assert_eq!(cfg.min_steps_per_task, 2048);
        assert_eq!(cfg.rollout_batchsize, 1);
        assert_eq!(cfg.entropy_coeff, 0.0);
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = PpoConfig::default();
        cfg.num_sgd_iter = 50;
        cfg.sgd_batchsize = 2048;
        cfg.clip_epsilon = f64::INFINITY;
        cfg.plain_sgd = true;
        let parsed = parse_ppo_config(&cfg.to_file_string()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn parses_partial_files_over_defaults() {
        let cfg = parse_ppo_config("# tuned\nnum_sgd_iter: 50\n\nsgd_batchsize: 2048\n").unwrap();
        assert_eq!(cfg.num_sgd_iter, 50);
        assert_eq!(cfg.sgd_batchsize, 2048);
        assert_eq!(cfg.gamma, 0.995);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            parse_ppo_config("gama: 0.9\n"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_ppo_config("gamma: fast\n"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_ppo_config("gamma 0.9\n"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn validation_rejects_out_of_range_fields() {
        let mut cfg = PpoConfig::default();
        cfg.gamma = 0.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "gamma", .. })));

        let mut cfg = PpoConfig::default();
        cfg.sgd_batchsize = 20000;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "sgd_batchsize", .. })));

        let mut cfg = PpoConfig::default();
        cfg.rollout_batchsize = 2;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "rollout_batchsize", .. })));

        let mut cfg = PpoConfig::default();
        cfg.clip_epsilon = f64::INFINITY;
        cfg.validate().unwrap();
    }
}
