//! Standalone rollout worker. Connects to a coordinator over TCP,
//! registers, and serves training rounds until told to shut down.
//!
//! The coordinator's assignment is authoritative; the optional `--env`,
//! `--seed`, and `--config` flags declare what this worker was launched
//! for, and registration aborts if the assignment contradicts them.

use std::net::TcpStream;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use armfleet::kinematics::EnvKind;
use armfleet::ppo::parse_ppo_config;
use armfleet::transport::Endpoint;
use armfleet::worker::{worker_entry, WorkerExpectations};

#[derive(Parser)]
#[command(name = "armfleet-worker", version)]
struct Args {
    /// Coordinator address, e.g. 127.0.0.1:7000.
    #[arg(long)]
    connect: String,

    /// Requested worker id; the coordinator may assign a different one.
    #[arg(long)]
    worker_id: Option<u32>,

    /// Environment preset this worker expects to be assigned.
    #[arg(long)]
    env: Option<EnvKind>,

    /// Global seed this worker expects to be assigned.
    #[arg(long)]
    seed: Option<u64>,

    /// Learner config file this worker expects to be assigned.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("armfleet-worker: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<(), String> {
    let ppo = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            Some(parse_ppo_config(&text).map_err(|e| format!("{}: {e}", path.display()))?)
        }
        None => None,
    };
    let expectations = WorkerExpectations {
        env: args.env,
        global_seed: args.seed,
        ppo,
    };

    let stream = TcpStream::connect(&args.connect)
        .map_err(|e| format!("connecting to {}: {e}", args.connect))?;
    stream.set_nodelay(true).map_err(|e| e.to_string())?;
    let mut endpoint = Endpoint::tcp(stream);
    worker_entry(
        &mut endpoint,
        args.worker_id.unwrap_or(u32::MAX),
        Some(&expectations),
    )
    .map_err(|e| e.to_string())
}
