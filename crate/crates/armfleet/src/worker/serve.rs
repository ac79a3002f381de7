//! Worker side of the coordinator protocol: the registration handshake
//! followed by the per-round serve cycle.
//!
//! One round on the wire is `Params` in, `Ack` out, `Ack` (the go signal)
//! in, `LocalModel` out. The intermediate acknowledgement lets the
//! coordinator hold every worker at the barrier until all of them have
//! loaded the broadcast parameters, so no worker starts collecting against
//! a round its peers have not yet received.

use crate::kinematics::EnvKind;
use crate::ppo::{parse_ppo_config, PpoConfig};
use crate::transport::{Endpoint, Message, TransportError, ACK_REGISTERED, REGISTRATION_TIMEOUT};

use super::state::WorkerState;
use super::WorkerError;

/// Expectations a worker carries from its own launch flags. The
/// coordinator's `AssignConfig` is authoritative; any populated field here
/// that contradicts the assignment aborts registration instead of silently
/// running with a task the operator did not ask for.
#[derive(Debug, Clone, Default)]
pub struct WorkerExpectations {
    pub env: Option<EnvKind>,
    pub global_seed: Option<u64>,
    pub ppo: Option<PpoConfig>,
}

/// Registers with the coordinator, builds the local state from the
/// assignment, and enters [`worker_serve`]. `requested_id` is a hint
/// (`u32::MAX` for no preference); the assigned id wins.
pub fn worker_entry(
    endpoint: &mut Endpoint,
    requested_id: u32,
    expectations: Option<&WorkerExpectations>,
) -> Result<(), WorkerError> {
    send(endpoint, requested_id, &Message::Hello { requested_id })?;
    let msg = recv_or_report(endpoint, requested_id, Some(REGISTRATION_TIMEOUT))?;
    let (worker_id, global_seed, env, ppo_config) = match msg {
        Message::AssignConfig {
            worker_id,
            global_seed,
            env,
            ppo_config,
        } => (worker_id, global_seed, env, ppo_config),
        Message::Shutdown => return Ok(()),
        Message::Error { message } => {
            return Err(WorkerError::Transport {
                worker_id: requested_id,
                source: TransportError::PeerError(message),
            });
        }
        other => return Err(protocol_failure(endpoint, requested_id, "AssignConfig", &other)),
    };

    let mut state = match build_state(worker_id, global_seed, &env, &ppo_config, expectations) {
        Ok(state) => state,
        Err(err) => {
            report_failure(endpoint, &err);
            return Err(err);
        }
    };
    send(
        endpoint,
        worker_id,
        &Message::Ack {
            round: ACK_REGISTERED,
        },
    )?;
    worker_serve(endpoint, &mut state)
}

/// Runs rounds until the coordinator sends `Shutdown` or something goes
/// wrong. Failures on this side are reported back as an `Error` frame
/// before bailing, so the coordinator can name the culprit instead of
/// timing out.
pub fn worker_serve(endpoint: &mut Endpoint, state: &mut WorkerState) -> Result<(), WorkerError> {
    let worker_id = state.worker_id();
    loop {
        let (round, global) = match recv_or_report(endpoint, worker_id, None)? {
            Message::Params { round, params } => (round, params),
            Message::Shutdown => return Ok(()),
            Message::Error { message } => {
                return Err(WorkerError::Transport {
                    worker_id,
                    source: TransportError::PeerError(message),
                });
            }
            other => return Err(protocol_failure(endpoint, worker_id, "Params", &other)),
        };

        if let Err(err) = state.load_global(global) {
            report_failure(endpoint, &err);
            return Err(err);
        }
        send(endpoint, worker_id, &Message::Ack { round })?;

        match recv_or_report(endpoint, worker_id, None)? {
            Message::Ack { round: r } if r == round => {}
            Message::Ack { .. } => {
                let err = WorkerError::Protocol {
                    worker_id,
                    expected: "the current round's go signal",
                    got: "an acknowledgement of a different round",
                };
                report_failure(endpoint, &err);
                return Err(err);
            }
            Message::Shutdown => return Ok(()),
            Message::Error { message } => {
                return Err(WorkerError::Transport {
                    worker_id,
                    source: TransportError::PeerError(message),
                });
            }
            other => return Err(protocol_failure(endpoint, worker_id, "Ack", &other)),
        }

        let (params, stats) = match state.run_round() {
            Ok(result) => result,
            Err(err) => {
                report_failure(endpoint, &err);
                return Err(err);
            }
        };
        send(
            endpoint,
            worker_id,
            &Message::LocalModel {
                worker_id,
                round,
                stats,
                params,
            },
        )?;
    }
}

fn build_state(
    worker_id: u32,
    global_seed: u64,
    env: &str,
    ppo_config: &str,
    expectations: Option<&WorkerExpectations>,
) -> Result<WorkerState, WorkerError> {
    let env_kind: EnvKind = env.parse().map_err(|e| WorkerError::BadAssignment {
        worker_id,
        reason: format!("environment: {e}"),
    })?;
    let cfg = parse_ppo_config(ppo_config).map_err(|e| WorkerError::BadAssignment {
        worker_id,
        reason: format!("ppo config: {e}"),
    })?;

    if let Some(exp) = expectations {
        if let Some(expected) = exp.env {
            if expected != env_kind {
                return Err(WorkerError::AssignmentMismatch {
                    worker_id,
                    what: "environment",
                    expected: expected.to_string(),
                    assigned: env_kind.to_string(),
                });
            }
        }
        if let Some(expected) = exp.global_seed {
            if expected != global_seed {
                return Err(WorkerError::AssignmentMismatch {
                    worker_id,
                    what: "global seed",
                    expected: expected.to_string(),
                    assigned: global_seed.to_string(),
                });
            }
        }
        if let Some(expected) = &exp.ppo {
            if *expected != cfg {
                let (want, got) = first_config_divergence(expected, &cfg);
                return Err(WorkerError::AssignmentMismatch {
                    worker_id,
                    what: "ppo config",
                    expected: want,
                    assigned: got,
                });
            }
        }
    }

    WorkerState::new(worker_id, env_kind, cfg, global_seed)
}

/// First differing line between the two config renderings. Both configs
/// render with the same line schema and are known unequal here.
fn first_config_divergence(expected: &PpoConfig, assigned: &PpoConfig) -> (String, String) {
    let want = expected.to_file_string();
    let got = assigned.to_file_string();
    for (a, b) in want.lines().zip(got.lines()) {
        if a != b {
            return (a.to_string(), b.to_string());
        }
    }
    (want, got)
}

fn send(endpoint: &mut Endpoint, worker_id: u32, msg: &Message) -> Result<(), WorkerError> {
    endpoint
        .send(msg)
        .map_err(|source| WorkerError::Transport { worker_id, source })
}

/// Best-effort failure report; the connection may already be gone.
fn report_failure(endpoint: &mut Endpoint, err: &WorkerError) {
    let _ = endpoint.send(&Message::Error {
        message: err.to_string(),
    });
}

/// Receives one message. Decode failures are echoed back as an `Error`
/// frame so the coordinator learns why the worker is about to vanish;
/// connection failures are not, the socket is already unusable.
fn recv_or_report(
    endpoint: &mut Endpoint,
    worker_id: u32,
    timeout: Option<std::time::Duration>,
) -> Result<Message, WorkerError> {
    match endpoint.recv(timeout) {
        Ok(msg) => Ok(msg),
        Err(source) => {
            if source.is_decode_error() {
                let _ = endpoint.send(&Message::Error {
                    message: source.to_string(),
                });
            }
            Err(WorkerError::Transport { worker_id, source })
        }
    }
}

fn protocol_failure(
    endpoint: &mut Endpoint,
    worker_id: u32,
    expected: &'static str,
    got: &Message,
) -> WorkerError {
    let err = WorkerError::Protocol {
        worker_id,
        expected,
        got: got.type_name(),
    };
    report_failure(endpoint, &err);
    err
}

#[cfg(test)]
mod tests {
    use std::thread::{self, JoinHandle};
    use std::time::Duration;

    use super::*;
    use crate::policy::{MlpSpec, ParamVector};
    use crate::transport::channel_pair;

    const STEP_TIMEOUT: Option<Duration> = Some(Duration::from_secs(30));

    fn tiny_cfg() -> PpoConfig {
        PpoConfig {
            min_steps_per_task: 1,
            num_sgd_iter: 2,
            ..PpoConfig::default()
        }
    }

    fn scara3_zero_params() -> ParamVector {
        let spec = EnvKind::Scara3.spec();
        let mlp = MlpSpec::new(spec.obs_dim(), spec.action_dim()).unwrap();
        ParamVector::zeros(mlp.manifest())
    }

    fn spawn_worker(
        requested_id: u32,
        expectations: Option<WorkerExpectations>,
    ) -> (Endpoint, JoinHandle<Result<(), WorkerError>>) {
        let (coordinator, mut worker) = channel_pair();
        let handle =
            thread::spawn(move || worker_entry(&mut worker, requested_id, expectations.as_ref()));
        (coordinator, handle)
    }

    fn register(coordinator: &mut Endpoint, worker_id: u32, ppo_config: &str) {
        match coordinator.recv(STEP_TIMEOUT).unwrap() {
            Message::Hello { requested_id } => assert_eq!(requested_id, worker_id),
            other => panic!("expected Hello, got {}", other.type_name()),
        }
        coordinator
            .send(&Message::AssignConfig {
                worker_id,
                global_seed: 11,
                env: "scara3".to_string(),
                ppo_config: ppo_config.to_string(),
            })
            .unwrap();
    }

    fn expect_ack(coordinator: &mut Endpoint, round: u32) {
        match coordinator.recv(STEP_TIMEOUT).unwrap() {
            Message::Ack { round: r } => assert_eq!(r, round),
            other => panic!("expected Ack, got {}", other.type_name()),
        }
    }

    fn expect_error_frame(coordinator: &mut Endpoint, needle: &str) {
        match coordinator.recv(STEP_TIMEOUT).unwrap() {
            Message::Error { message } => {
                assert!(
                    message.contains(needle),
                    "error frame `{message}` does not mention `{needle}`"
                );
            }
            other => panic!("expected Error, got {}", other.type_name()),
        }
    }

    #[test]
    fn serve_cycle_round_trips_local_models() {
        let (mut coordinator, handle) = spawn_worker(7, None);
        register(&mut coordinator, 7, &tiny_cfg().to_file_string());
        expect_ack(&mut coordinator, ACK_REGISTERED);

        let global = scara3_zero_params();
        for round in 1..=2u32 {
            coordinator
                .send(&Message::Params {
                    round,
                    params: global.clone(),
                })
                .unwrap();
            expect_ack(&mut coordinator, round);
            coordinator.send(&Message::Ack { round }).unwrap();
            match coordinator.recv(STEP_TIMEOUT).unwrap() {
                Message::LocalModel {
                    worker_id,
                    round: r,
                    stats,
                    params,
                } => {
                    assert_eq!(worker_id, 7);
                    assert_eq!(r, round);
                    assert_eq!(stats.total_steps, 2048);
                    assert!(stats.mean_step_reward < 0.0);
                    assert!(stats.collection_seconds >= 0.0);
                    assert_eq!(params.version(), 1);
                    assert!(params.same_manifest(&global));
                }
                other => panic!("expected LocalModel, got {}", other.type_name()),
            }
        }

        coordinator.send(&Message::Shutdown).unwrap();
        handle.join().unwrap().unwrap();
    }

    #[test]
    fn shutdown_at_the_go_signal_exits_cleanly() {
        let (mut coordinator, handle) = spawn_worker(0, None);
        register(&mut coordinator, 0, &tiny_cfg().to_file_string());
        expect_ack(&mut coordinator, ACK_REGISTERED);

        coordinator
            .send(&Message::Params {
                round: 1,
                params: scara3_zero_params(),
            })
            .unwrap();
        expect_ack(&mut coordinator, 1);
        coordinator.send(&Message::Shutdown).unwrap();
        handle.join().unwrap().unwrap();
    }

    #[test]
    fn foreign_manifest_is_reported_and_fatal() {
        let (mut coordinator, handle) = spawn_worker(3, None);
        register(&mut coordinator, 3, &tiny_cfg().to_file_string());
        expect_ack(&mut coordinator, ACK_REGISTERED);

        let foreign = ParamVector::zeros(MlpSpec::new(4, 2).unwrap().manifest());
        coordinator
            .send(&Message::Params {
                round: 1,
                params: foreign,
            })
            .unwrap();
        expect_error_frame(&mut coordinator, "manifest");
        let err = handle.join().unwrap().unwrap_err();
        assert!(matches!(
            err,
            WorkerError::ManifestMismatch { worker_id: 3, .. }
        ));
    }

    #[test]
    fn unexpected_message_is_a_protocol_error() {
        let (mut coordinator, handle) = spawn_worker(2, None);
        register(&mut coordinator, 2, &tiny_cfg().to_file_string());
        expect_ack(&mut coordinator, ACK_REGISTERED);

        coordinator
            .send(&Message::Hello { requested_id: 9 })
            .unwrap();
        expect_error_frame(&mut coordinator, "Hello");
        let err = handle.join().unwrap().unwrap_err();
        assert!(matches!(
            err,
            WorkerError::Protocol {
                worker_id: 2,
                expected: "Params",
                got: "Hello",
            }
        ));
    }

    #[test]
    fn contradicted_launch_flag_aborts_registration() {
        let expectations = WorkerExpectations {
            global_seed: Some(99),
            ..WorkerExpectations::default()
        };
        let (mut coordinator, handle) = spawn_worker(1, Some(expectations));
        register(&mut coordinator, 1, &tiny_cfg().to_file_string());
        expect_error_frame(&mut coordinator, "global seed");
        let err = handle.join().unwrap().unwrap_err();
        assert!(matches!(
            err,
            WorkerError::AssignmentMismatch {
                worker_id: 1,
                what: "global seed",
                ..
            }
        ));
    }

    #[test]
    fn unparseable_assignment_is_reported() {
        let (mut coordinator, handle) = spawn_worker(5, None);
        register(&mut coordinator, 5, "gamma: fast\n");
        expect_error_frame(&mut coordinator, "ppo config");
        let err = handle.join().unwrap().unwrap_err();
        assert!(matches!(
            err,
            WorkerError::BadAssignment { worker_id: 5, .. }
        ));
    }

    #[test]
    fn coordinator_error_frame_stops_the_worker() {
        let (mut coordinator, handle) = spawn_worker(4, None);
        register(&mut coordinator, 4, &tiny_cfg().to_file_string());
        expect_ack(&mut coordinator, ACK_REGISTERED);

        coordinator
            .send(&Message::Error {
                message: "coordinator on fire".to_string(),
            })
            .unwrap();
        let err = handle.join().unwrap().unwrap_err();
        match err {
            WorkerError::Transport {
                worker_id: 4,
                source: TransportError::PeerError(text),
            } => assert_eq!(text, "coordinator on fire"),
            other => panic!("expected a peer error, got {other}"),
        }
    }

    #[test]
    fn shutdown_during_registration_exits_cleanly() {
        let (mut coordinator, handle) = spawn_worker(u32::MAX, None);
        match coordinator.recv(STEP_TIMEOUT).unwrap() {
            Message::Hello { requested_id } => assert_eq!(requested_id, u32::MAX),
            other => panic!("expected Hello, got {}", other.type_name()),
        }
        coordinator.send(&Message::Shutdown).unwrap();
        handle.join().unwrap().unwrap();
    }
}
