//! Worker-local training state and the collect/update cycle.

use std::time::Instant;

use crate::kinematics::{EnvKind, ReacherEnv};
use crate::policy::{sample_action, MlpSpec, ParamVector};
use crate::ppo::{adapt_kl_coeff, compute_advantages, sgd_update, PpoConfig, RolloutBatch};
use crate::rng::{derive_seed, stream, tag};
use crate::transport::RoundStats;

use super::WorkerError;

#[derive(Debug, Clone)]
pub struct WorkerState {
    worker_id: u32,
    global_seed: u64,
    /// kl_coeff inside evolves across rounds via the adaptive rule.
    cfg: PpoConfig,
    spec: MlpSpec,
    params: ParamVector,
    env: ReacherEnv,
    rounds_completed: u32,
    cumulative_steps: u64,
    /// Counters feeding the per-collection and per-update seed streams, so
    /// every stream in a run is distinct yet replayable.
    collections_done: u64,
    updates_done: u64,
}

impl WorkerState {
    pub fn new(
        worker_id: u32,
        env_kind: EnvKind,
        cfg: PpoConfig,
        global_seed: u64,
    ) -> Result<Self, WorkerError> {
        cfg.validate().map_err(|e| WorkerError::Learner {
            worker_id,
            source: e.into(),
        })?;
        let env_spec = env_kind.spec();
        let spec = MlpSpec::new(env_spec.obs_dim(), env_spec.action_dim()).map_err(|e| {
            WorkerError::Learner {
                worker_id,
                source: crate::ppo::PpoError::Policy(e),
            }
        })?;
        let params = spec.init_params(&mut stream(global_seed, &[tag::POLICY_INIT]));
        let env_seed = derive_seed(global_seed, &[tag::ENV_RESET, worker_id as u64]);
        let env = ReacherEnv::new(env_spec, env_seed);
        Ok(Self {
            worker_id,
            global_seed,
            cfg,
            spec,
            params,
            env,
            rounds_completed: 0,
            cumulative_steps: 0,
            collections_done: 0,
            updates_done: 0,
        })
    }

    pub fn worker_id(&self) -> u32 {
        self.worker_id
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn cfg(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn rounds_completed(&self) -> u32 {
        self.rounds_completed
    }

    pub fn cumulative_steps(&self) -> u64 {
        self.cumulative_steps
    }

    /// Installs broadcast parameters as the new local model.
    pub fn load_global(&mut self, params: ParamVector) -> Result<(), WorkerError> {
        if !self.params.same_manifest(&params) {
            return Err(WorkerError::ManifestMismatch {
                worker_id: self.worker_id,
                detail: self
                    .params
                    .manifest()
                    .describe_mismatch(params.manifest()),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Runs whole episodes under the stochastic policy and stops at the
    /// first episode end at which the total reaches `min_steps`, so the
    /// total stays below min_steps plus one horizon.
    pub fn collect_rollouts(&mut self, min_steps: u32) -> Result<RolloutBatch, WorkerError> {
        let started = Instant::now();
        let mut rng = stream(
            self.global_seed,
            &[
                tag::ACTION_NOISE,
                self.worker_id as u64,
                self.collections_done,
            ],
        );
        self.collections_done += 1;

        let obs_dim = self.spec.input_dim;
        let action_dim = self.spec.action_dim;
        let mut observations = Vec::new();
        let mut actions = Vec::new();
        let mut log_probs = Vec::new();
        let mut rewards = Vec::new();
        let mut values = Vec::new();
        let mut dones = Vec::new();
        let mut episode_boundaries = Vec::new();
        let mut total_steps = 0usize;

        loop {
            debug_assert_eq!(self.env.state().steps_elapsed, 0);
            let mut obs = self.env.observation();
            loop {
                let out = self
                    .spec
                    .forward(&self.params, obs.as_slice())
                    .map_err(|e| WorkerError::Learner {
                        worker_id: self.worker_id,
                        source: crate::ppo::PpoError::Policy(e),
                    })?;
                let (action, log_prob) = sample_action(&out.mean, &out.log_std, &mut rng);
                let step = self.env.step(&action).map_err(|e| WorkerError::Env {
                    worker_id: self.worker_id,
                    source: e,
                })?;
                observations.extend_from_slice(obs.as_slice());
                actions.extend_from_slice(&action);
                log_probs.push(log_prob);
                rewards.push(step.reward);
                values.push(out.value);
                dones.push(step.done);
                total_steps += 1;
                if step.done {
                    break;
                }
                obs = step.observation;
            }
            episode_boundaries.push(total_steps);
            self.env.reset();
            if total_steps >= min_steps.max(1) as usize {
                break;
            }
        }

        let batch = RolloutBatch {
            obs_dim,
            action_dim,
            observations,
            actions,
            log_probs,
            rewards,
            values,
            dones,
            episode_boundaries,
            total_steps,
            collection_seconds: started.elapsed().as_secs_f64(),
        };
        debug_assert!(batch.validate().is_ok());
        Ok(batch)
    }

    /// One learning pass: advantages, the multi-epoch update, then the
    /// KL-coefficient adaptation driven by the final epoch's mean KL.
    pub fn local_update(&mut self, batch: &RolloutBatch) -> Result<ParamVector, WorkerError> {
        let worker_id = self.worker_id;
        let learner = move |source| WorkerError::Learner { worker_id, source };
        let processed =
            compute_advantages(batch, self.cfg.gamma, self.cfg.gae_lambda).map_err(learner)?;
        let mut rng = stream(
            self.global_seed,
            &[tag::SGD_SHUFFLE, self.worker_id as u64, self.updates_done],
        );
        self.updates_done += 1;
        let (new_params, records) =
            sgd_update(&self.spec, &self.params, &processed, &self.cfg, &mut rng)
                .map_err(learner)?;
        let final_kl = records
            .last()
            .expect("num_sgd_iter >= 1 is enforced by validate")
            .mean_kl;
        self.cfg.kl_coeff = adapt_kl_coeff(self.cfg.kl_coeff, final_kl, self.cfg.kl_target);
        self.params = new_params.clone();
        Ok(new_params)
    }

    /// One broadcast round: local_rounds collect/update cycles. Returns the
    /// resulting local model and step-weighted stats over the cycles.
    pub fn run_round(&mut self) -> Result<(ParamVector, RoundStats), WorkerError> {
        let mut total_steps: u64 = 0;
        let mut reward_dot_steps = 0.0;
        let mut collection_seconds = 0.0;
        for _ in 0..self.cfg.local_rounds.max(1) {
            let batch = self.collect_rollouts(self.cfg.min_steps_per_task)?;
            total_steps += batch.total_steps as u64;
            reward_dot_steps += batch.mean_step_reward() * batch.total_steps as f64;
            collection_seconds += batch.collection_seconds;
            self.local_update(&batch)?;
        }
        self.rounds_completed += 1;
        self.cumulative_steps += total_steps;
        Ok((
            self.params.clone(),
            RoundStats {
                total_steps,
                mean_step_reward: reward_dot_steps / total_steps as f64,
                collection_seconds,
            },
        ))
    }
}
