//! Coordinator/worker message vocabulary and the payload codecs.
//!
//! The round cycle: coordinator sends Params; each worker loads and replies
//! Ack; once every Ack is in, the coordinator sends Ack back as the go
//! signal (so collection never starts before all workers hold the same
//! parameters); workers then run the round and reply LocalModel.

use crate::policy::ParamVector;

use super::reader::{put_string, Reader};
use super::wire::{decode_param_wire, encode_param_wire};
use super::TransportError;

/// Ack round value used by the registration handshake instead of a round
/// number.
pub const ACK_REGISTERED: u32 = u32::MAX;

const MAX_ENV_NAME_LEN: usize = 256;
const MAX_CONFIG_LEN: usize = 1 << 20;
const MAX_ERROR_LEN: usize = 1 << 16;

/// Per-round worker statistics piggybacked on the LocalModel reply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    pub total_steps: u64,
    pub mean_step_reward: f64,
    pub collection_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Worker announces itself; `requested_id` is a hint (ACK_REGISTERED-like
    /// sentinel u32::MAX means no preference) and the coordinator's
    /// AssignConfig carries the authoritative id.
    Hello { requested_id: u32 },
    AssignConfig {
        worker_id: u32,
        global_seed: u64,
        env: String,
        ppo_config: String,
    },
    Params { round: u32, params: ParamVector },
    LocalModel {
        worker_id: u32,
        round: u32,
        stats: RoundStats,
        params: ParamVector,
    },
    Shutdown,
    Error { message: String },
    Ack { round: u32 },
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::Hello { .. } => 0,
            Message::AssignConfig { .. } => 1,
            Message::Params { .. } => 2,
            Message::LocalModel { .. } => 3,
            Message::Shutdown => 4,
            Message::Error { .. } => 5,
            Message::Ack { .. } => 6,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::AssignConfig { .. } => "AssignConfig",
            Message::Params { .. } => "Params",
            Message::LocalModel { .. } => "LocalModel",
            Message::Shutdown => "Shutdown",
            Message::Error { .. } => "Error",
            Message::Ack { .. } => "Ack",
        }
    }

    pub fn is_known_type(byte: u8) -> bool {
        byte <= 6
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Hello { requested_id } => {
                out.extend_from_slice(&requested_id.to_le_bytes());
            }
            Message::AssignConfig {
                worker_id,
                global_seed,
                env,
                ppo_config,
            } => {
                out.extend_from_slice(&worker_id.to_le_bytes());
                out.extend_from_slice(&global_seed.to_le_bytes());
                put_string(&mut out, env);
                put_string(&mut out, ppo_config);
            }
            Message::Params { round, params } => {
                out.extend_from_slice(&round.to_le_bytes());
                out.extend_from_slice(&params.version().to_le_bytes());
                encode_param_wire(params, &mut out);
            }
            Message::LocalModel {
                worker_id,
                round,
                stats,
                params,
            } => {
                out.extend_from_slice(&worker_id.to_le_bytes());
                out.extend_from_slice(&round.to_le_bytes());
                out.extend_from_slice(&stats.total_steps.to_le_bytes());
                out.extend_from_slice(&stats.mean_step_reward.to_bits().to_le_bytes());
                out.extend_from_slice(&stats.collection_seconds.to_bits().to_le_bytes());
                out.extend_from_slice(&params.version().to_le_bytes());
                encode_param_wire(params, &mut out);
            }
            Message::Shutdown => {}
            Message::Error { message } => {
                out.extend_from_slice(message.as_bytes());
            }
            Message::Ack { round } => {
                out.extend_from_slice(&round.to_le_bytes());
            }
        }
        out
    }

    pub fn decode_payload(type_byte: u8, payload: &[u8]) -> Result<Message, TransportError> {
        match type_byte {
            0 => {
                let mut r = Reader::new(payload);
                let requested_id = r.u32("requested_id").map_err(payload_err("Hello"))?;
                r.expect_end("Hello").map_err(payload_err("Hello"))?;
                Ok(Message::Hello { requested_id })
            }
            1 => {
                let mut r = Reader::new(payload);
                let wrap = payload_err("AssignConfig");
                let worker_id = r.u32("worker_id").map_err(wrap)?;
                let global_seed = r.u64("global_seed").map_err(wrap)?;
                let env = r.string("env", MAX_ENV_NAME_LEN).map_err(wrap)?.to_string();
                let ppo_config = r
                    .string("ppo_config", MAX_CONFIG_LEN)
                    .map_err(wrap)?
                    .to_string();
                r.expect_end("AssignConfig").map_err(wrap)?;
                Ok(Message::AssignConfig {
                    worker_id,
                    global_seed,
                    env,
                    ppo_config,
                })
            }
            2 => {
                let mut r = Reader::new(payload);
                let wrap = payload_err("Params");
                let round = r.u32("round").map_err(wrap)?;
                let version = r.u64("version").map_err(wrap)?;
                let (mut params, consumed) = decode_param_wire(r.rest())?;
                if r.pos() + consumed != payload.len() {
                    return Err(wrap(format!(
                        "{} trailing bytes after the parameter block",
                        payload.len() - r.pos() - consumed
                    )));
                }
                params.set_version(version);
                Ok(Message::Params { round, params })
            }
            3 => {
                let mut r = Reader::new(payload);
                let wrap = payload_err("LocalModel");
                let worker_id = r.u32("worker_id").map_err(wrap)?;
                let round = r.u32("round").map_err(wrap)?;
                let total_steps = r.u64("total_steps").map_err(wrap)?;
                let mean_step_reward = r.f64("mean_step_reward").map_err(wrap)?;
                let collection_seconds = r.f64("collection_seconds").map_err(wrap)?;
                if !mean_step_reward.is_finite() {
                    return Err(wrap("mean_step_reward is not finite".to_string()));
                }
                if !collection_seconds.is_finite() || collection_seconds < 0.0 {
                    return Err(wrap("collection_seconds is not a finite non-negative".to_string()));
                }
                let version = r.u64("version").map_err(wrap)?;
                let (mut params, consumed) = decode_param_wire(r.rest())?;
                if r.pos() + consumed != payload.len() {
                    return Err(wrap(format!(
                        "{} trailing bytes after the parameter block",
                        payload.len() - r.pos() - consumed
                    )));
                }
                params.set_version(version);
                Ok(Message::LocalModel {
                    worker_id,
                    round,
                    stats: RoundStats {
                        total_steps,
                        mean_step_reward,
                        collection_seconds,
                    },
                    params,
                })
            }
            4 => {
                if !payload.is_empty() {
                    return Err(payload_err("Shutdown")(format!(
                        "{} unexpected payload bytes",
                        payload.len()
                    )));
                }
                Ok(Message::Shutdown)
            }
            5 => {
                if payload.len() > MAX_ERROR_LEN {
                    return Err(payload_err("Error")(format!(
                        "message of {} bytes exceeds the {MAX_ERROR_LEN} cap",
                        payload.len()
                    )));
                }
                let message = std::str::from_utf8(payload)
                    .map_err(|_| payload_err("Error")("message is not valid UTF-8".into()))?
                    .to_string();
                Ok(Message::Error { message })
            }
            6 => {
                let mut r = Reader::new(payload);
                let round = r.u32("round").map_err(payload_err("Ack"))?;
                r.expect_end("Ack").map_err(payload_err("Ack"))?;
                Ok(Message::Ack { round })
            }
            other => Err(TransportError::BadMsgType(other)),
        }
    }
}

fn payload_err(msg_type: &'static str) -> impl Fn(String) -> TransportError + Copy {
    move |reason| TransportError::Payload { msg_type, reason }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::MlpSpec;
    use crate::rng::{stream, tag};
    use crate::transport::frame::{decode_frame, encode_frame};

    fn reacher_params() -> ParamVector {
        let spec = MlpSpec::new(9, 3).unwrap();
        let mut p = spec.init_params(&mut stream(5, &[tag::POLICY_INIT]));
        p.set_version(42);
        p
    }

    #[test]
    fn params_message_round_trips_with_version() {
        let params = reacher_params();
        assert_eq!(params.len(), 5063);
        let msg = Message::Params {
            round: 9,
            params: params.clone(),
        };
        let (back, _) = decode_frame(&encode_frame(&msg)).unwrap();
        match back {
            Message::Params {
                round,
                params: decoded,
            } => {
                assert_eq!(round, 9);
                assert_eq!(decoded.version(), 42);
                assert!(decoded.values_eq(&params));
            }
            other => panic!("decoded {other:?}"),
        }
    }

    #[test]
    fn local_model_round_trips_with_stats() {
        let params = reacher_params();
        let msg = Message::LocalModel {
            worker_id: 3,
            round: 17,
            stats: RoundStats {
                total_steps: 2048,
                mean_step_reward: -0.231,
                collection_seconds: 1.75,
            },
            params,
        };
        let (back, _) = decode_frame(&encode_frame(&msg)).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn malformed_payloads_are_typed_errors() {
        assert!(matches!(
            Message::decode_payload(0, &[1, 2]),
            Err(TransportError::Payload {
                msg_type: "Hello",
                ..
            })
        ));
        assert!(matches!(
            Message::decode_payload(4, &[0]),
            Err(TransportError::Payload {
                msg_type: "Shutdown",
                ..
            })
        ));
        assert!(matches!(
            Message::decode_payload(5, &[0xFF, 0xFE]),
            Err(TransportError::Payload {
                msg_type: "Error",
                ..
            })
        ));
        // Ack with trailing garbage.
        assert!(matches!(
            Message::decode_payload(6, &[0, 0, 0, 0, 9]),
            Err(TransportError::Payload { msg_type: "Ack", .. })
        ));
    }

    #[test]
    fn non_finite_stats_are_rejected() {
        let params = reacher_params();
        let msg = Message::LocalModel {
            worker_id: 0,
            round: 1,
            stats: RoundStats {
                total_steps: 1,
                mean_step_reward: f64::NAN,
                collection_seconds: 0.5,
            },
            params,
        };
        let payload = msg.encode_payload();
        assert!(matches!(
            Message::decode_payload(3, &payload),
            Err(TransportError::Payload {
                msg_type: "LocalModel",
                ..
            })
        ));
    }
}
