//! Cluster lifecycle: spawn one worker per replica slot, run the
//! registration handshake, and tear everything down at the end.
//!
//! Registration is two-phase. Every worker first sends `Hello` with a
//! requested id; the coordinator grants requested ids when they are in
//! range and unclaimed, fills the rest with the smallest unused ids, and
//! answers with an authoritative `AssignConfig`. A worker that accepts the
//! assignment replies `Ack` with the [`ACK_REGISTERED`] sentinel. Ids are
//! always dense `0..n`, so round results can be gathered in id order.

use std::collections::VecDeque;
use std::io;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Child, Command};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::kinematics::EnvKind;
use crate::ppo::PpoConfig;
use crate::worker::{worker_entry, WorkerError};

use super::endpoint::{channel_pair, Endpoint};
use super::message::{Message, ACK_REGISTERED};
use super::{ClusterConfig, ClusterMode, TransportError};

/// How long the whole registration handshake may take, covering worker
/// startup, `Hello`, and the `AssignConfig` round trip.
pub const REGISTRATION_TIMEOUT: Duration = Duration::from_secs(60);

/// Grace period between asking a worker process to shut down and killing it.
const SHUTDOWN_GRACE: Duration = Duration::from_secs(10);

/// Poll interval while waiting for a worker process to exit.
const REAP_POLL: Duration = Duration::from_millis(50);

/// Assignment broadcast to every worker during registration.
#[derive(Debug, Clone)]
pub struct WorkerRunArgs {
    pub env: EnvKind,
    pub global_seed: u64,
    pub ppo: PpoConfig,
    /// Worker executable for local-process clusters; `None` resolves to the
    /// `armfleet-worker` binary next to the current executable.
    pub worker_binary: Option<PathBuf>,
}

impl WorkerRunArgs {
    pub fn new(env: EnvKind, global_seed: u64, ppo: PpoConfig) -> Self {
        Self {
            env,
            global_seed,
            ppo,
            worker_binary: None,
        }
    }
}

/// Coordinator-side connection to one registered worker.
#[derive(Debug)]
pub struct WorkerLink {
    pub worker_id: u32,
    pub endpoint: Endpoint,
}

/// Where a worker actually runs. `Remote` workers have no local body to
/// reap; their lifecycle belongs to whoever launched them.
#[derive(Debug)]
enum WorkerBody {
    Thread(JoinHandle<Result<(), WorkerError>>),
    Process(Child),
    Remote,
}

/// Final state of one worker after shutdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitStatus {
    /// Exited on its own after the shutdown request.
    Clean,
    /// Failed, had to be killed, or exited nonzero; the string says why.
    Forced(String),
    /// Already gone when shutdown was requested.
    Absent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerExit {
    pub worker_id: u32,
    pub status: ExitStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShutdownReport {
    pub exits: Vec<WorkerExit>,
}

impl ShutdownReport {
    pub fn all_clean(&self) -> bool {
        self.exits
            .iter()
            .all(|exit| exit.status == ExitStatus::Clean)
    }
}

/// Handle to a running cluster. Links are sorted by worker id, and
/// `links[i].worker_id == i` holds after a successful spawn. Dropping the
/// handle without calling [`shutdown_cluster`] shuts down best-effort.
#[derive(Debug)]
pub struct ClusterHandle {
    links: Vec<WorkerLink>,
    bodies: Vec<WorkerBody>,
    run_args: WorkerRunArgs,
    mode: ClusterMode,
    report: Option<ShutdownReport>,
}

impl ClusterHandle {
    pub fn num_workers(&self) -> usize {
        self.links.len()
    }

    pub fn links_mut(&mut self) -> &mut [WorkerLink] {
        &mut self.links
    }

    pub fn run_args(&self) -> &WorkerRunArgs {
        &self.run_args
    }

    pub fn mode(&self) -> ClusterMode {
        self.mode
    }
}

impl Drop for ClusterHandle {
    fn drop(&mut self) {
        if self.report.is_none() {
            shutdown_cluster(self);
        }
    }
}

/// Spawns and registers `cfg.total_workers()` workers running `run_args`.
pub fn spawn_cluster(
    cfg: &ClusterConfig,
    run_args: WorkerRunArgs,
) -> Result<ClusterHandle, TransportError> {
    cfg.validate()?;
    let total = cfg.total_workers() as usize;
    match cfg.mode {
        ClusterMode::InProcess => spawn_threads(total, run_args),
        ClusterMode::LocalProcesses => spawn_processes(cfg, total, run_args),
        ClusterMode::Remote => {
            let listener = TcpListener::bind(&cfg.listen_address)?;
            eprintln!(
                "waiting for {total} remote workers on {}",
                listener.local_addr()?
            );
            accept_remote(&listener, total, run_args)
        }
    }
}

fn spawn_threads(total: usize, run_args: WorkerRunArgs) -> Result<ClusterHandle, TransportError> {
    let mut endpoints = Vec::with_capacity(total);
    let mut handles = Vec::with_capacity(total);
    for i in 0..total {
        let (coordinator_end, mut worker_end) = channel_pair();
        let handle = std::thread::Builder::new()
            .name(format!("worker-{i}"))
            .spawn(move || worker_entry(&mut worker_end, i as u32, None))
            .map_err(TransportError::Io)?;
        endpoints.push(coordinator_end);
        handles.push(handle);
    }

    // Dropping the coordinator endpoints on failure closes every channel,
    // so the spawned threads unblock and exit on their own.
    let links = register_endpoints(endpoints, &run_args, REGISTRATION_TIMEOUT)?;

    // Thread i requested id i and requests in range are always granted, so
    // the id-sorted links pair positionally with the spawn-order handles.
    let bodies = handles.into_iter().map(WorkerBody::Thread).collect();
    Ok(ClusterHandle {
        links,
        bodies,
        run_args,
        mode: ClusterMode::InProcess,
        report: None,
    })
}

fn spawn_processes(
    cfg: &ClusterConfig,
    total: usize,
    run_args: WorkerRunArgs,
) -> Result<ClusterHandle, TransportError> {
    let listener = TcpListener::bind(&cfg.listen_address)?;
    let address = listener.local_addr()?;
    let binary = match &run_args.worker_binary {
        Some(path) => path.clone(),
        None => default_worker_binary()?,
    };

    let mut children: Vec<Child> = Vec::with_capacity(total);
    for i in 0..total {
        let spawned = Command::new(&binary)
            .arg("--connect")
            .arg(address.to_string())
            .arg("--worker-id")
            .arg(i.to_string())
            .spawn();
        match spawned {
            Ok(child) => children.push(child),
            Err(e) => {
                kill_children(&mut children);
                return Err(TransportError::Registration {
                    worker: i.to_string(),
                    reason: format!("failed to launch {}: {e}", binary.display()),
                });
            }
        }
    }

    let links = match accept_connections(&listener, total)
        .and_then(|endpoints| register_endpoints(endpoints, &run_args, REGISTRATION_TIMEOUT))
    {
        Ok(links) => links,
        Err(e) => {
            kill_children(&mut children);
            return Err(e);
        }
    };

    // Each child was launched with `--worker-id i`, which it echoes as its
    // requested id, so the granted ids match the launch indices. The
    // take-any fallback only fires for a worker binary that requests some
    // other id; pairing is then arbitrary among the leftovers.
    let mut children: Vec<Option<Child>> = children.into_iter().map(Some).collect();
    let bodies = links
        .iter()
        .map(|link| {
            let slot = link.worker_id as usize;
            let child = children
                .get_mut(slot)
                .and_then(Option::take)
                .or_else(|| children.iter_mut().find_map(Option::take))
                .expect("one child per registered link");
            WorkerBody::Process(child)
        })
        .collect();

    Ok(ClusterHandle {
        links,
        bodies,
        run_args,
        mode: ClusterMode::LocalProcesses,
        report: None,
    })
}

fn accept_remote(
    listener: &TcpListener,
    total: usize,
    run_args: WorkerRunArgs,
) -> Result<ClusterHandle, TransportError> {
    let endpoints = accept_connections(listener, total)?;
    let links = register_endpoints(endpoints, &run_args, REGISTRATION_TIMEOUT)?;
    let bodies = links.iter().map(|_| WorkerBody::Remote).collect();
    Ok(ClusterHandle {
        links,
        bodies,
        run_args,
        mode: ClusterMode::Remote,
        report: None,
    })
}

fn accept_connections(
    listener: &TcpListener,
    total: usize,
) -> Result<Vec<Endpoint>, TransportError> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + REGISTRATION_TIMEOUT;
    let mut endpoints = Vec::with_capacity(total);
    while endpoints.len() < total {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nodelay(true)?;
                stream.set_nonblocking(false)?;
                endpoints.push(Endpoint::tcp(stream));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Registration {
                        worker: format!("slot {}", endpoints.len()),
                        reason: format!(
                            "only {} of {total} workers connected within {REGISTRATION_TIMEOUT:?}",
                            endpoints.len()
                        ),
                    });
                }
                std::thread::sleep(REAP_POLL);
            }
            Err(e) => return Err(TransportError::Io(e)),
        }
    }
    Ok(endpoints)
}

/// Runs the registration handshake over already-connected endpoints and
/// returns the links sorted by worker id. Ids come out dense `0..n`.
fn register_endpoints(
    endpoints: Vec<Endpoint>,
    run_args: &WorkerRunArgs,
    timeout: Duration,
) -> Result<Vec<WorkerLink>, TransportError> {
    let total = endpoints.len();
    let deadline = Instant::now() + timeout;
    let mut pending: Vec<(Endpoint, u32)> = Vec::with_capacity(total);
    for (slot, mut endpoint) in endpoints.into_iter().enumerate() {
        let remaining = deadline.saturating_duration_since(Instant::now());
        match endpoint.recv(Some(remaining)) {
            Ok(Message::Hello { requested_id }) => pending.push((endpoint, requested_id)),
            Ok(other) => {
                return Err(TransportError::Registration {
                    worker: format!("slot {slot}"),
                    reason: format!("sent {} instead of Hello", other.type_name()),
                });
            }
            Err(e) => {
                return Err(TransportError::Registration {
                    worker: format!("slot {slot}"),
                    reason: e.to_string(),
                });
            }
        }
    }

    // Requested ids win when in range and unclaimed; everyone else gets the
    // smallest unused id, in slot order.
    let mut taken = vec![false; total];
    let mut ids = vec![u32::MAX; total];
    for (slot, (_, requested)) in pending.iter().enumerate() {
        let want = *requested as usize;
        if want < total && !taken[want] {
            ids[slot] = *requested;
            taken[want] = true;
        }
    }
    let mut free: VecDeque<usize> = (0..total).filter(|&id| !taken[id]).collect();
    for id in ids.iter_mut() {
        if *id == u32::MAX {
            *id = free.pop_front().expect("one free id per unassigned slot") as u32;
        }
    }

    let env = run_args.env.as_str().to_string();
    let ppo_config = run_args.ppo.to_file_string();
    for (slot, (endpoint, _)) in pending.iter_mut().enumerate() {
        endpoint
            .send(&Message::AssignConfig {
                worker_id: ids[slot],
                global_seed: run_args.global_seed,
                env: env.clone(),
                ppo_config: ppo_config.clone(),
            })
            .map_err(|e| TransportError::Registration {
                worker: ids[slot].to_string(),
                reason: e.to_string(),
            })?;
    }

    let mut links = Vec::with_capacity(total);
    for (slot, (mut endpoint, _)) in pending.into_iter().enumerate() {
        let worker_id = ids[slot];
        let remaining = deadline.saturating_duration_since(Instant::now());
        match endpoint.recv(Some(remaining)) {
            Ok(Message::Ack {
                round: ACK_REGISTERED,
            }) => links.push(WorkerLink {
                worker_id,
                endpoint,
            }),
            Ok(Message::Error { message }) => {
                return Err(TransportError::Registration {
                    worker: worker_id.to_string(),
                    reason: message,
                });
            }
            Ok(other) => {
                return Err(TransportError::Registration {
                    worker: worker_id.to_string(),
                    reason: format!("sent {} instead of the registration Ack", other.type_name()),
                });
            }
            Err(e) => {
                return Err(TransportError::Registration {
                    worker: worker_id.to_string(),
                    reason: e.to_string(),
                });
            }
        }
    }

    links.sort_by_key(|link| link.worker_id);
    Ok(links)
}

/// Asks every worker to stop and reaps the local bodies. Idempotent: a
/// second call returns the cached report without touching the workers.
pub fn shutdown_cluster(handle: &mut ClusterHandle) -> ShutdownReport {
    if let Some(report) = &handle.report {
        return report.clone();
    }

    let mut delivered = Vec::with_capacity(handle.links.len());
    for link in &mut handle.links {
        delivered.push(link.endpoint.send(&Message::Shutdown).is_ok());
    }

    let mut exits = Vec::with_capacity(handle.links.len());
    for ((link, body), delivered) in handle
        .links
        .iter()
        .zip(handle.bodies.drain(..))
        .zip(delivered)
    {
        let status = match body {
            WorkerBody::Thread(join_handle) => match join_handle.join() {
                Ok(Ok(())) => ExitStatus::Clean,
                Ok(Err(err)) => ExitStatus::Forced(err.to_string()),
                Err(_) => ExitStatus::Forced("worker thread panicked".to_string()),
            },
            WorkerBody::Process(child) => reap_process(child),
            WorkerBody::Remote => {
                if delivered {
                    ExitStatus::Clean
                } else {
                    ExitStatus::Absent
                }
            }
        };
        exits.push(WorkerExit {
            worker_id: link.worker_id,
            status,
        });
    }

    let report = ShutdownReport { exits };
    handle.report = Some(report.clone());
    report
}

fn reap_process(mut child: Child) -> ExitStatus {
    let deadline = Instant::now() + SHUTDOWN_GRACE;
    loop {
        match child.try_wait() {
            Ok(Some(status)) if status.success() => return ExitStatus::Clean,
            Ok(Some(status)) => return ExitStatus::Forced(format!("exited with {status}")),
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return ExitStatus::Forced(format!(
                        "killed after not exiting within {SHUTDOWN_GRACE:?}"
                    ));
                }
                std::thread::sleep(REAP_POLL);
            }
            Err(_) => return ExitStatus::Absent,
        }
    }
}

fn kill_children(children: &mut Vec<Child>) {
    for child in children.iter_mut() {
        let _ = child.kill();
        let _ = child.wait();
    }
    children.clear();
}

fn default_worker_binary() -> Result<PathBuf, TransportError> {
    let exe = std::env::current_exe()?;
    let name = format!("armfleet-worker{}", std::env::consts::EXE_SUFFIX);
    let mut dir = exe.parent();
    // Test executables live one directory below the target bin directory,
    // so the parent chain is searched rather than one fixed sibling slot.
    while let Some(d) = dir {
        let candidate = d.join(&name);
        if candidate.is_file() {
            return Ok(candidate);
        }
        dir = d.parent();
    }
    Err(TransportError::Io(io::Error::new(
        io::ErrorKind::NotFound,
        format!("{name} not found near {}", exe.display()),
    )))
}

#[cfg(test)]
mod tests {
    use std::net::TcpStream;
    use std::thread;

    use super::*;

    fn tiny_args() -> WorkerRunArgs {
        let ppo = PpoConfig {
            min_steps_per_task: 1,
            num_sgd_iter: 2,
            ..PpoConfig::default()
        };
        WorkerRunArgs::new(EnvKind::Scara3, 17, ppo)
    }

    #[test]
    fn in_process_cluster_registers_dense_ids_and_shuts_down_clean() {
        let cfg = ClusterConfig {
            replicas: 2,
            workers_per_replica: 2,
            ..ClusterConfig::default()
        };
        let mut handle = spawn_cluster(&cfg, tiny_args()).unwrap();
        assert_eq!(handle.num_workers(), 4);
        for (i, link) in handle.links_mut().iter().enumerate() {
            assert_eq!(link.worker_id, i as u32);
        }

        let report = shutdown_cluster(&mut handle);
        assert!(report.all_clean(), "report: {report:?}");
        assert_eq!(report.exits.len(), 4);
        assert_eq!(shutdown_cluster(&mut handle), report);
    }

    #[test]
    fn one_round_runs_through_an_in_process_cluster() {
        let cfg = ClusterConfig::default();
        let mut handle = spawn_cluster(&cfg, tiny_args()).unwrap();
        let link = &mut handle.links_mut()[0];

        let spec = EnvKind::Scara3.spec();
        let mlp = crate::policy::MlpSpec::new(spec.obs_dim(), spec.action_dim()).unwrap();
        let global = crate::policy::ParamVector::zeros(mlp.manifest());
        link.endpoint
            .send(&Message::Params {
                round: 1,
                params: global.clone(),
            })
            .unwrap();
        let timeout = Some(Duration::from_secs(60));
        match link.endpoint.recv(timeout).unwrap() {
            Message::Ack { round: 1 } => {}
            other => panic!("expected Ack, got {}", other.type_name()),
        }
        link.endpoint.send(&Message::Ack { round: 1 }).unwrap();
        match link.endpoint.recv(timeout).unwrap() {
            Message::LocalModel {
                worker_id,
                round,
                stats,
                params,
            } => {
                assert_eq!(worker_id, 0);
                assert_eq!(round, 1);
                assert!(stats.total_steps > 0);
                assert!(params.same_manifest(&global));
            }
            other => panic!("expected LocalModel, got {}", other.type_name()),
        }

        assert!(shutdown_cluster(&mut handle).all_clean());
    }

    #[test]
    fn remote_workers_register_over_tcp() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let address = listener.local_addr().unwrap();

        let mut joiners = Vec::new();
        for _ in 0..2 {
            joiners.push(thread::spawn(move || {
                let stream = TcpStream::connect(address).unwrap();
                let mut endpoint = Endpoint::tcp(stream);
                worker_entry(&mut endpoint, u32::MAX, None)
            }));
        }

        let mut handle = accept_remote(&listener, 2, tiny_args()).unwrap();
        assert_eq!(handle.num_workers(), 2);
        assert_eq!(handle.links_mut()[0].worker_id, 0);
        assert_eq!(handle.links_mut()[1].worker_id, 1);

        let report = shutdown_cluster(&mut handle);
        assert!(report.all_clean(), "report: {report:?}");
        for joiner in joiners {
            joiner.join().unwrap().unwrap();
        }
    }

    #[test]
    fn contended_id_requests_fall_back_to_smallest_unused() {
        let (coord_a, mut worker_a) = channel_pair();
        let (coord_b, mut worker_b) = channel_pair();
        let join_a = thread::spawn(move || worker_entry(&mut worker_a, 0, None));
        let join_b = thread::spawn(move || worker_entry(&mut worker_b, 0, None));

        let mut links =
            register_endpoints(vec![coord_a, coord_b], &tiny_args(), REGISTRATION_TIMEOUT)
                .unwrap();
        assert_eq!(links[0].worker_id, 0);
        assert_eq!(links[1].worker_id, 1);

        for link in &mut links {
            link.endpoint.send(&Message::Shutdown).unwrap();
        }
        join_a.join().unwrap().unwrap();
        join_b.join().unwrap().unwrap();
    }

    #[test]
    fn silent_worker_fails_registration_by_slot() {
        let (coord, _quiet_worker_end) = channel_pair();
        let err =
            register_endpoints(vec![coord], &tiny_args(), Duration::from_millis(50)).unwrap_err();
        match err {
            TransportError::Registration { worker, reason } => {
                assert_eq!(worker, "slot 0");
                assert!(reason.contains("timed out"), "reason: {reason}");
            }
            other => panic!("expected a registration error, got {other}"),
        }
    }

    #[test]
    fn missing_worker_binary_fails_the_launch() {
        let cfg = ClusterConfig {
            mode: ClusterMode::LocalProcesses,
            ..ClusterConfig::default()
        };
        let mut args = tiny_args();
        args.worker_binary = Some(PathBuf::from("/nonexistent/armfleet-worker"));
        let err = spawn_cluster(&cfg, args).unwrap_err();
        match err {
            TransportError::Registration { worker, reason } => {
                assert_eq!(worker, "0");
                assert!(reason.contains("/nonexistent/armfleet-worker"), "{reason}");
            }
            other => panic!("expected a registration error, got {other}"),
        }
    }
}
