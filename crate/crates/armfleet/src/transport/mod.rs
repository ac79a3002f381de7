//! Byte-stream plumbing between the coordinator and its workers: framed
//! messages with checksums, bit-exact parameter serialization, replica-style
//! cluster configuration, and thread or process based worker orchestration.

mod cluster;
mod config;
mod endpoint;
mod frame;
mod message;
mod reader;
mod wire;

pub use cluster::{
    shutdown_cluster, spawn_cluster, ClusterHandle, ExitStatus, ShutdownReport, WorkerExit,
    WorkerLink, WorkerRunArgs, REGISTRATION_TIMEOUT,
};
pub use config::{
    format_cluster_config, parse_cluster_config, ClusterConfig, ClusterMode,
};
pub use endpoint::{channel_pair, Endpoint};
pub use frame::{
    decode_frame, encode_frame, FrameDecoder, FRAME_HEADER_LEN, FRAME_MAGIC, FRAME_TRAILER_LEN,
    MAX_PAYLOAD_LEN,
};
pub use message::{Message, RoundStats, ACK_REGISTERED};
pub use wire::{
    decode_param_wire, decode_params_file, encode_param_wire, encode_params_file,
    read_params_file, write_params_file, PARAM_FILE_MAGIC,
};

use std::time::Duration;

use thiserror::Error;

use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("frame magic {found:?} is not \"RGW1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unknown message type byte {0}")]
    BadMsgType(u8),
    #[error("payload length {len} exceeds the frame cap")]
    Oversize { len: u64 },
    #[error("frame needs {need} bytes, only {have} buffered")]
    Truncated { have: usize, need: usize },
    #[error("payload checksum {found:#010x} does not match computed {expected:#010x}")]
    BadChecksum { expected: u32, found: u32 },
    #[error("{msg_type} payload malformed: {reason}")]
    Payload {
        msg_type: &'static str,
        reason: String,
    },
    #[error("parameter wire data malformed: {0}")]
    Wire(String),
    #[error(transparent)]
    Params(#[from] PolicyError),
    #[error("parameter file does not start with \"RGP1\"")]
    BadFileMagic,
    #[error("cluster config line {line}: {reason}")]
    ClusterConfig { line: usize, reason: String },
    #[error("cluster config does not set replicas")]
    MissingReplicas,
    #[error("workers_per_replica {got} is outside [1, 4]; at most 4 workers are allocated per machine")]
    WorkersPerReplica { got: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("connection closed by peer")]
    Closed,
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("expected a {expected} message, got {got}")]
    UnexpectedMessage {
        expected: &'static str,
        got: &'static str,
    },
    #[error("worker {worker} failed to register: {reason}")]
    Registration { worker: String, reason: String },
    #[error("peer reported an error: {0}")]
    PeerError(String),
}

impl TransportError {
    /// True for errors caused by undecodable or unexpected bytes, where the
    /// receiver should tell the peer before dropping the connection. IO-level
    /// failures have no usable channel left to report on.
    pub fn is_decode_error(&self) -> bool {
        matches!(
            self,
            TransportError::BadMagic { .. }
                | TransportError::BadMsgType(_)
                | TransportError::Oversize { .. }
                | TransportError::BadChecksum { .. }
                | TransportError::Payload { .. }
                | TransportError::Wire(_)
                | TransportError::Params(_)
        )
    }
}
