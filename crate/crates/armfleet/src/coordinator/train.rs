//! The synchronous training loop.
//!
//! Each round the coordinator broadcasts the global parameters, waits for
//! every worker to acknowledge the load, releases them all with a go
//! signal, gathers one local model per worker, and merges the results into
//! the next global policy. The intermediate acknowledgement is the barrier
//! that puts every worker on the same round before any of them starts
//! collecting.

use std::time::{Duration, Instant};

use crate::policy::{MlpSpec, ParamVector};
use crate::rng::{stream, tag};
use crate::transport::{encode_frame, ClusterHandle, Message, RoundStats, WorkerLink};

use super::merge::{merge_models_weighted, MergeStrategy};
use super::metrics::{MetricsRow, TrainingMetrics};
use super::CoordError;

/// When to end a training run. At least one bound must be live: a finite
/// reward threshold, a round cap, or a wall-clock cap.
#[derive(Debug, Clone, PartialEq)]
pub struct StopCriterion {
    /// Stop once the round's step-weighted mean per-step reward reaches
    /// this value. `f64::INFINITY` disables the threshold.
    pub reward_threshold: f64,
    pub max_rounds: Option<u32>,
    pub max_wall_clock_seconds: Option<f64>,
}

impl Default for StopCriterion {
    fn default() -> Self {
        Self {
            reward_threshold: -0.01,
            max_rounds: None,
            max_wall_clock_seconds: None,
        }
    }
}

impl StopCriterion {
    pub fn validate(&self) -> Result<(), CoordError> {
        if self.reward_threshold.is_nan() {
            return Err(CoordError::BadStop {
                reason: "reward threshold is NaN".to_string(),
            });
        }
        if let Some(seconds) = self.max_wall_clock_seconds {
            if !(seconds > 0.0) || seconds.is_nan() {
                return Err(CoordError::BadStop {
                    reason: format!("max wall clock {seconds} is not positive"),
                });
            }
        }
        let reward_live = self.reward_threshold.is_finite();
        if !reward_live && self.max_rounds.is_none() && self.max_wall_clock_seconds.is_none() {
            return Err(CoordError::BadStop {
                reason: "no live bound: infinite threshold, no round or wall-clock cap"
                    .to_string(),
            });
        }
        Ok(())
    }
}

/// Which bound ended the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    RewardThreshold,
    MaxRounds,
    MaxWallClock,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub merge: MergeStrategy,
    /// Cap on waiting for any single worker response within a round.
    pub round_timeout: Duration,
    /// Called after each completed round, e.g. for progress printing.
    pub progress: Option<fn(&MetricsRow)>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            merge: MergeStrategy::default(),
            round_timeout: Duration::from_secs(3600),
            progress: None,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub metrics: TrainingMetrics,
    pub stop: StopReason,
}

/// A failed run still carries the rounds that completed before the
/// failure, so partial curves can be saved for inspection.
#[derive(Debug, thiserror::Error)]
#[error("training failed at round {round}: {source}")]
pub struct TrainError {
    pub round: u32,
    #[source]
    pub source: CoordError,
    pub partial: TrainingMetrics,
}

/// Trains the cluster's assigned task until `stop` triggers and returns
/// the final global policy with its training curve. The policy is
/// initialized from the cluster's global seed, so equal seeds give equal
/// runs bit for bit.
pub fn train(cluster: &mut ClusterHandle, stop: &StopCriterion) -> Result<TrainOutcome, TrainError> {
    train_with_options(cluster, stop, &TrainOptions::default())
}

pub fn train_with_options(
    cluster: &mut ClusterHandle,
    stop: &StopCriterion,
    options: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    let at_setup = |source: CoordError| TrainError {
        round: 0,
        source,
        partial: TrainingMetrics::default(),
    };

    let run_args = cluster.run_args().clone();
    run_args.ppo.validate().map_err(|e| at_setup(e.into()))?;
    stop.validate().map_err(at_setup)?;
    if run_args.ppo.num_workers as usize != cluster.num_workers() {
        return Err(at_setup(CoordError::WorkerCountMismatch {
            cfg: run_args.ppo.num_workers,
            cluster: cluster.num_workers(),
        }));
    }

    let env_spec = run_args.env.spec();
    let mlp = MlpSpec::new(env_spec.obs_dim(), env_spec.action_dim())
        .map_err(|e| at_setup(e.into()))?;
    let mut global = mlp.init_params(&mut stream(run_args.global_seed, &[tag::POLICY_INIT]));
    let mut metrics = TrainingMetrics::default();

    if stop.max_rounds == Some(0) {
        return Ok(TrainOutcome {
            params: global,
            metrics,
            stop: StopReason::MaxRounds,
        });
    }

    match run_rounds(
        cluster,
        stop,
        options,
        run_args.global_seed,
        &mut global,
        &mut metrics,
    ) {
        Ok(reason) => Ok(TrainOutcome {
            params: global,
            metrics,
            stop: reason,
        }),
        Err((round, source)) => Err(TrainError {
            round,
            source,
            partial: metrics,
        }),
    }
}

fn run_rounds(
    cluster: &mut ClusterHandle,
    stop: &StopCriterion,
    options: &TrainOptions,
    seed: u64,
    global: &mut ParamVector,
    metrics: &mut TrainingMetrics,
) -> Result<StopReason, (u32, CoordError)> {
    let started = Instant::now();
    let workers = cluster.num_workers() as u32;
    let mut cumulative_steps: u64 = 0;

    for round in 1u32.. {
        let fail = |source: CoordError| (round, source);

        // Broadcast: one encode, many sends.
        let frame = encode_frame(&Message::Params {
            round,
            params: global.clone(),
        });
        for link in cluster.links_mut() {
            link.endpoint.send_bytes(&frame).map_err(|source| {
                fail(CoordError::Transport {
                    worker_id: link.worker_id,
                    source,
                })
            })?;
        }

        // Barrier: every worker confirms the load before any go signal.
        for link in cluster.links_mut() {
            match recv_from(link, options.round_timeout).map_err(fail)? {
                Message::Ack { round: r } if r == round => {}
                other => return Err(fail(unexpected(link.worker_id, "load Ack", other))),
            }
        }
        for link in cluster.links_mut() {
            link.endpoint
                .send(&Message::Ack { round })
                .map_err(|source| {
                    fail(CoordError::Transport {
                        worker_id: link.worker_id,
                        source,
                    })
                })?;
        }

        // Gather in id order.
        let mut local_models: Vec<ParamVector> = Vec::with_capacity(workers as usize);
        let mut round_stats: Vec<RoundStats> = Vec::with_capacity(workers as usize);
        for link in cluster.links_mut() {
            match recv_from(link, options.round_timeout).map_err(fail)? {
                Message::LocalModel {
                    worker_id,
                    round: r,
                    stats,
                    params,
                } => {
                    if worker_id != link.worker_id || r != round {
                        return Err(fail(CoordError::Protocol {
                            worker_id: link.worker_id,
                            expected: "its own LocalModel for the current round",
                            got: format!("LocalModel from worker {worker_id} for round {r}"),
                        }));
                    }
                    if !params.same_manifest(global) {
                        return Err(fail(CoordError::ManifestMismatch {
                            who: format!("worker {worker_id}"),
                            detail: global.manifest().describe_mismatch(params.manifest()),
                        }));
                    }
                    local_models.push(params);
                    round_stats.push(stats);
                }
                other => return Err(fail(unexpected(link.worker_id, "LocalModel", other))),
            }
        }

        let weights: Vec<f64> = match options.merge {
            MergeStrategy::Uniform => vec![1.0; local_models.len()],
            MergeStrategy::StepWeighted => round_stats
                .iter()
                .map(|s| s.total_steps as f64)
                .collect(),
        };
        *global = merge_models_weighted(&local_models, &weights).map_err(fail)?;

        let round_steps: u64 = round_stats.iter().map(|s| s.total_steps).sum();
        cumulative_steps += round_steps;
        let mean_reward = round_stats
            .iter()
            .map(|s| s.mean_step_reward * s.total_steps as f64)
            .sum::<f64>()
            / round_steps as f64;
        let row = MetricsRow {
            round,
            timesteps: cumulative_steps,
            wall_clock_s: started.elapsed().as_secs_f64(),
            mean_reward,
            workers,
            seed,
        };
        metrics.push(row);
        if let Some(progress) = options.progress {
            progress(&row);
        }

        if mean_reward >= stop.reward_threshold {
            return Ok(StopReason::RewardThreshold);
        }
        if stop.max_rounds.is_some_and(|cap| round >= cap) {
            return Ok(StopReason::MaxRounds);
        }
        let wall = metrics.last().map(|row| row.wall_clock_s).unwrap_or(0.0);
        if stop.max_wall_clock_seconds.is_some_and(|cap| wall >= cap) {
            return Ok(StopReason::MaxWallClock);
        }
    }
    unreachable!("round counter is bounded by the stop criterion");
}

fn recv_from(link: &mut WorkerLink, timeout: Duration) -> Result<Message, CoordError> {
    link.endpoint
        .recv(Some(timeout))
        .map_err(|source| CoordError::Transport {
            worker_id: link.worker_id,
            source,
        })
}

/// A worker `Error` frame keeps its own story; anything else becomes a
/// protocol error naming what the coordinator was waiting for.
fn unexpected(worker_id: u32, expected: &'static str, got: Message) -> CoordError {
    match got {
        Message::Error { message } => CoordError::Worker { worker_id, message },
        other => CoordError::Protocol {
            worker_id,
            expected,
            got: other.type_name().to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::EnvKind;
    use crate::ppo::PpoConfig;
    use crate::transport::{spawn_cluster, shutdown_cluster, ClusterConfig, WorkerRunArgs};

    fn tiny_cluster(workers: u32, seed: u64) -> ClusterHandle {
        let cfg = ClusterConfig::for_workers(workers).unwrap();
        let ppo = PpoConfig {
            min_steps_per_task: 1,
            num_sgd_iter: 2,
            num_workers: workers,
            ..PpoConfig::default()
        };
        spawn_cluster(&cfg, WorkerRunArgs::new(EnvKind::Scara3, seed, ppo)).unwrap()
    }

    fn rounds_only(n: u32) -> StopCriterion {
        StopCriterion {
            reward_threshold: f64::INFINITY,
            max_rounds: Some(n),
            max_wall_clock_seconds: None,
        }
    }

    #[test]
    fn stop_criterion_requires_a_live_bound() {
        assert!(StopCriterion::default().validate().is_ok());
        assert!(rounds_only(3).validate().is_ok());

        let unbounded = StopCriterion {
            reward_threshold: f64::INFINITY,
            max_rounds: None,
            max_wall_clock_seconds: None,
        };
        assert!(matches!(
            unbounded.validate().unwrap_err(),
            CoordError::BadStop { .. }
        ));

        let nan = StopCriterion {
            reward_threshold: f64::NAN,
            ..StopCriterion::default()
        };
        assert!(nan.validate().is_err());

        let zero_wall = StopCriterion {
            max_wall_clock_seconds: Some(0.0),
            ..StopCriterion::default()
        };
        assert!(zero_wall.validate().is_err());
    }

    #[test]
    fn max_rounds_zero_returns_the_initial_policy_untrained() {
        let mut cluster = tiny_cluster(1, 5);
        let outcome = train(&mut cluster, &rounds_only(0)).unwrap();
        assert_eq!(outcome.stop, StopReason::MaxRounds);
        assert!(outcome.metrics.rows.is_empty());
        assert_eq!(outcome.params.version(), 0);

        let mlp = MlpSpec::new(
            EnvKind::Scara3.spec().obs_dim(),
            EnvKind::Scara3.spec().action_dim(),
        )
        .unwrap();
        let expected = mlp.init_params(&mut stream(5, &[tag::POLICY_INIT]));
        assert!(outcome.params.values_eq(&expected));
        assert!(shutdown_cluster(&mut cluster).all_clean());
    }

    #[test]
    fn two_rounds_accumulate_metrics_and_bump_versions() {
        let mut cluster = tiny_cluster(2, 9);
        let outcome = train(&mut cluster, &rounds_only(2)).unwrap();
        assert_eq!(outcome.stop, StopReason::MaxRounds);
        assert_eq!(outcome.metrics.rows.len(), 2);

        let [first, second] = outcome.metrics.rows[..] else {
            unreachable!()
        };
        assert_eq!(first.round, 1);
        assert_eq!(second.round, 2);
        assert_eq!(second.timesteps, first.timesteps * 2);
        assert!(second.wall_clock_s >= first.wall_clock_s);
        assert_eq!(first.workers, 2);
        assert_eq!(first.seed, 9);
        assert!(first.mean_reward < 0.0);

        // Round 1 merges locals at version 1, round 2 broadcasts version 2
        // and merges locals at version 3.
        assert_eq!(outcome.params.version(), 4);
        assert!(shutdown_cluster(&mut cluster).all_clean());
    }

    #[test]
    fn equal_seeds_train_bit_identically() {
        let run = || {
            let mut cluster = tiny_cluster(2, 42);
            let outcome = train(&mut cluster, &rounds_only(2)).unwrap();
            shutdown_cluster(&mut cluster);
            outcome
        };
        let a = run();
        let b = run();
        assert!(a.params.values_eq(&b.params));
        assert_eq!(a.metrics.rows.len(), b.metrics.rows.len());
        for (ra, rb) in a.metrics.rows.iter().zip(&b.metrics.rows) {
            assert_eq!(ra.round, rb.round);
            assert_eq!(ra.timesteps, rb.timesteps);
            assert_eq!(ra.mean_reward.to_bits(), rb.mean_reward.to_bits());
        }
    }

    #[test]
    fn a_trivial_reward_threshold_stops_after_round_one() {
        let mut cluster = tiny_cluster(1, 3);
        let stop = StopCriterion {
            reward_threshold: -1e9,
            max_rounds: Some(50),
            max_wall_clock_seconds: None,
        };
        let outcome = train(&mut cluster, &stop).unwrap();
        assert_eq!(outcome.stop, StopReason::RewardThreshold);
        assert_eq!(outcome.metrics.rows.len(), 1);
        assert!(shutdown_cluster(&mut cluster).all_clean());
    }

    #[test]
    fn worker_count_mismatch_fails_before_round_one() {
        let mut cluster = tiny_cluster(1, 3);
        let mut bad = cluster.run_args().ppo.clone();
        bad.num_workers = 2;
        // Rebuild a cluster whose assignment disagrees with its size by
        // spawning one worker with a two-worker config.
        shutdown_cluster(&mut cluster);
        let cfg = ClusterConfig::default();
        let mut cluster =
            spawn_cluster(&cfg, WorkerRunArgs::new(EnvKind::Scara3, 3, bad)).unwrap();
        let err = train(&mut cluster, &rounds_only(1)).unwrap_err();
        assert_eq!(err.round, 0);
        assert!(matches!(
            err.source,
            CoordError::WorkerCountMismatch { cfg: 2, cluster: 1 }
        ));
        shutdown_cluster(&mut cluster);
    }
}
