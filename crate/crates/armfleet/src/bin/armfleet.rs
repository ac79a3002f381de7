//! Coordinator CLI: trains a global policy on a worker cluster, sweeps
//! cluster sizes for scaling reports, scores saved policies, and replays
//! recorded training curves to verify determinism.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use armfleet::coordinator::{
    evaluate_policy, report, run_experiment, train_with_options, ExperimentPlan, MergeStrategy,
    MetricsRow, StopCriterion, StopReason, TrainOptions, TrainingMetrics,
};
use armfleet::kinematics::EnvKind;
use armfleet::ppo::{parse_ppo_config, PpoConfig};
use armfleet::transport::{
    parse_cluster_config, read_params_file, shutdown_cluster, spawn_cluster, write_params_file,
    ClusterConfig, ClusterHandle, ClusterMode, ExitStatus, WorkerRunArgs,
};

#[derive(Parser)]
#[command(name = "armfleet", version, about = "Distributed reacher-task policy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a global policy and save its curve and parameters.
    Train(TrainArgs),
    /// Sweep cluster sizes and seeds, then print a scaling report.
    Bench(BenchArgs),
    /// Measure accuracy and repeatability of saved parameters.
    Eval(EvalArgs),
    /// Re-run a recorded curve and verify the metrics reproduce exactly.
    ReplayCheck(ReplayArgs),
}

#[derive(Parser)]
struct TrainArgs {
    /// Environment preset.
    #[arg(long, default_value = "scara3")]
    env: EnvKind,

    /// Number of rollout workers; defaults to 1, or to the cluster file's
    /// total when `--cluster` is given.
    #[arg(long)]
    workers: Option<u32>,

    /// Learner config file (key: value lines).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Cluster layout file; overrides `--workers`, `--mode`, and `--listen`
    /// defaults.
    #[arg(long)]
    cluster: Option<PathBuf>,

    /// Seed for policy init, environment resets, and minibatch order.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory for curve.csv and params.rgp.
    #[arg(long)]
    out: PathBuf,

    /// How workers are hosted.
    #[arg(long)]
    mode: Option<ClusterMode>,

    /// Listen address for local-processes and remote modes.
    #[arg(long)]
    listen: Option<String>,

    /// Stop once step-weighted mean per-step reward reaches this value.
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    threshold: f64,

    /// Hard cap on training rounds.
    #[arg(long)]
    max_rounds: Option<u32>,

    /// Hard cap on wall-clock seconds.
    #[arg(long)]
    max_seconds: Option<f64>,

    /// Worker executable for local-processes mode.
    #[arg(long)]
    worker_binary: Option<PathBuf>,

    /// Weight the merge by each worker's step count instead of uniformly.
    #[arg(long)]
    step_weighted: bool,
}

#[derive(Parser)]
struct BenchArgs {
    /// Environment preset.
    #[arg(long, default_value = "scara3")]
    env: EnvKind,

    /// Cluster sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    workers: Vec<u32>,

    /// Seeds to repeat each size with.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,

    /// Learner config file applied to every cell.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory; finished cells found here are not re-run.
    #[arg(long)]
    out: PathBuf,

    /// How workers are hosted.
    #[arg(long, default_value = "in-process")]
    mode: ClusterMode,

    /// Stop once step-weighted mean per-step reward reaches this value.
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    threshold: f64,

    /// Hard cap on training rounds per cell.
    #[arg(long)]
    max_rounds: Option<u32>,

    /// Hard cap on wall-clock seconds per cell.
    #[arg(long)]
    max_seconds: Option<f64>,

    /// Evaluation runs per trained policy.
    #[arg(long, default_value_t = 10)]
    eval_runs: usize,

    /// Worker executable for local-processes mode.
    #[arg(long)]
    worker_binary: Option<PathBuf>,
}

#[derive(Parser)]
struct EvalArgs {
    /// Saved policy parameters (.rgp file).
    #[arg(long)]
    params: PathBuf,

    /// Environment preset the parameters were trained for.
    #[arg(long, default_value = "scara3")]
    env: EnvKind,

    /// Number of evaluation runs, each against a fresh target.
    #[arg(long, default_value_t = 10)]
    runs: usize,

    /// Seed for target placement.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Parser)]
struct ReplayArgs {
    /// Curve file recorded by a previous `train` run.
    #[arg(long)]
    curve: PathBuf,

    /// Environment preset used for the recorded run.
    #[arg(long, default_value = "scara3")]
    env: EnvKind,

    /// Learner config file; must match the recorded run's.
    #[arg(long)]
    config: Option<PathBuf>,

    /// How workers are hosted; any mode must reproduce the same curve.
    #[arg(long, default_value = "in-process")]
    mode: ClusterMode,

    /// Worker executable for local-processes mode.
    #[arg(long)]
    worker_binary: Option<PathBuf>,

    /// Set if the recorded run used step-weighted merging.
    #[arg(long)]
    step_weighted: bool,
}

/// Configuration errors exit with status 2, failures of a valid run with
/// status 1, matching the usage-error exit of argument parsing.
enum CliError {
    Config(String),
    Run(String),
}

impl CliError {
    fn config(message: impl ToString) -> Self {
        Self::Config(message.to_string())
    }

    fn run(message: impl ToString) -> Self {
        Self::Run(message.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ReplayCheck(args) => cmd_replay_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(message)) => {
            eprintln!("armfleet: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Run(message)) => {
            eprintln!("armfleet: {message}");
            ExitCode::FAILURE
        }
    }
}

fn load_ppo(path: Option<&PathBuf>) -> Result<PpoConfig, CliError> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
            parse_ppo_config(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
        None => Ok(PpoConfig::default()),
    }
}

fn print_progress(row: &MetricsRow) {
    println!(
        "round {:>4}  steps {:>10}  wall {:>8.1}s  mean reward {:.6}",
        row.round, row.timesteps, row.wall_clock_s, row.mean_reward
    );
}

fn warn_on_dirty_exits(cluster: &mut ClusterHandle) {
    let report = shutdown_cluster(cluster);
    for exit in &report.exits {
        match &exit.status {
            ExitStatus::Clean => {}
            ExitStatus::Forced(reason) => {
                eprintln!("armfleet: worker {} did not exit cleanly: {reason}", exit.worker_id)
            }
            ExitStatus::Absent => {
                eprintln!("armfleet: worker {} never confirmed shutdown", exit.worker_id)
            }
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let (mut cluster_cfg, workers) = match &args.cluster {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
            let (cfg, warnings) = parse_cluster_config(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            for warning in warnings {
                eprintln!("armfleet: {}: {warning}", path.display());
            }
            let total = cfg.total_workers();
            if let Some(requested) = args.workers {
                if requested != total {
                    return Err(CliError::config(format!(
                        "--workers {requested} contradicts {} ({} workers)",
                        path.display(),
                        total
                    )));
                }
            }
            (cfg, total)
        }
        None => {
            let workers = args.workers.unwrap_or(1);
            let cfg = ClusterConfig::for_workers(workers).map_err(CliError::run)?;
            (cfg, workers)
        }
    };
    if let Some(mode) = args.mode {
        cluster_cfg.mode = mode;
    }
    if let Some(listen) = &args.listen {
        cluster_cfg.listen_address = listen.clone();
    }

    let mut ppo = load_ppo(args.config.as_ref())?;
    ppo.num_workers = workers;
    ppo.validate().map_err(CliError::config)?;

    let stop = StopCriterion {
        reward_threshold: args.threshold,
        max_rounds: args.max_rounds,
        max_wall_clock_seconds: args.max_seconds,
    };
    let options = TrainOptions {
        merge: if args.step_weighted {
            MergeStrategy::StepWeighted
        } else {
            MergeStrategy::Uniform
        },
        progress: Some(print_progress),
        ..TrainOptions::default()
    };

    let mut run_args = WorkerRunArgs::new(args.env, args.seed, ppo);
    run_args.worker_binary = args.worker_binary.clone();

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::run(format!("creating {}: {e}", args.out.display())))?;
    let curve_path = args.out.join("curve.csv");
    let params_path = args.out.join("params.rgp");

    println!(
        "training {} with {workers} worker(s), seed {}, mode {}",
        args.env.as_str(),
        args.seed,
        cluster_cfg.mode
    );
    let mut cluster = spawn_cluster(&cluster_cfg, run_args).map_err(CliError::run)?;
    let outcome = match train_with_options(&mut cluster, &stop, &options) {
        Ok(outcome) => outcome,
        Err(failure) => {
            if !failure.partial.rows.is_empty() {
                if let Err(e) = failure.partial.write(&curve_path) {
                    eprintln!("armfleet: saving partial curve: {e}");
                } else {
                    eprintln!("armfleet: partial curve saved to {}", curve_path.display());
                }
            }
            warn_on_dirty_exits(&mut cluster);
            return Err(CliError::run(failure));
        }
    };
    warn_on_dirty_exits(&mut cluster);

    outcome.metrics.write(&curve_path).map_err(CliError::run)?;
    write_params_file(&params_path, &outcome.params).map_err(CliError::run)?;

    let last = outcome.metrics.last().expect("training ran at least one round");
    let reason = match outcome.stop {
        StopReason::RewardThreshold => "reward threshold reached",
        StopReason::MaxRounds => "round cap reached",
        StopReason::MaxWallClock => "wall-clock cap reached",
    };
    println!(
        "stopped after {} round(s), {} steps, {:.1}s: {reason}",
        last.round, last.timesteps, last.wall_clock_s
    );
    println!("final mean reward {:.6}", last.mean_reward);
    println!("curve:  {}", curve_path.display());
    println!("params: {}", params_path.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let mut plan = ExperimentPlan::new(args.env, &args.out);
    plan.worker_grid = args.workers;
    plan.seeds = args.seeds;
    plan.ppo = load_ppo(args.config.as_ref())?;
    plan.stop = StopCriterion {
        reward_threshold: args.threshold,
        max_rounds: args.max_rounds,
        max_wall_clock_seconds: args.max_seconds,
    };
    plan.eval_runs = args.eval_runs;
    plan.mode = args.mode;
    plan.worker_binary = args.worker_binary;
    plan.validate().map_err(CliError::config)?;

    let cells = plan.worker_grid.len() * plan.seeds.len();
    println!(
        "sweeping {} cell(s) on {} into {}",
        cells,
        plan.env.as_str(),
        plan.output_dir.display()
    );
    let summary = run_experiment(&plan).map_err(CliError::run)?;
    print!("{}", report(&summary));
    println!("summary: {}", plan.output_dir.join("summary.csv").display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if args.runs < 2 {
        return Err(CliError::config(
            "--runs must be at least 2; repeatability needs multiple runs",
        ));
    }
    let params = read_params_file(&args.params)
        .map_err(|e| CliError::run(format!("{}: {e}", args.params.display())))?;
    let spec = args.env.spec();
    let report =
        evaluate_policy(&params, &spec, args.runs, args.seed).map_err(CliError::run)?;
    println!(
        "{} runs on {}: accuracy {:.3} mm, repeatability {:.3} mm",
        args.runs,
        args.env.as_str(),
        report.accuracy_mm,
        report.repeatability_mm
    );
    Ok(())
}

fn cmd_replay_check(args: ReplayArgs) -> Result<(), CliError> {
    let recorded = TrainingMetrics::read(&args.curve)
        .map_err(|e| CliError::run(format!("{}: {e}", args.curve.display())))?;
    let rows = &recorded.rows;
    let first = rows
        .first()
        .ok_or_else(|| CliError::run(format!("{}: curve has no rows", args.curve.display())))?;
    let workers = first.workers;
    let seed = first.seed;
    for row in rows {
        if row.workers != workers || row.seed != seed {
            return Err(CliError::run(format!(
                "{}: rows disagree on workers/seed; not a single training run",
                args.curve.display()
            )));
        }
    }

    let mut ppo = load_ppo(args.config.as_ref())?;
    ppo.num_workers = workers;
    ppo.validate().map_err(CliError::config)?;

    let mut cluster_cfg = ClusterConfig::for_workers(workers).map_err(CliError::run)?;
    cluster_cfg.mode = args.mode;
    let mut run_args = WorkerRunArgs::new(args.env, seed, ppo);
    run_args.worker_binary = args.worker_binary.clone();

    // Replay to the recorded length regardless of reward so short and
    // converged curves both reproduce row for row.
    let stop = StopCriterion {
        reward_threshold: f64::INFINITY,
        max_rounds: Some(rows.len() as u32),
        max_wall_clock_seconds: None,
    };
    let options = TrainOptions {
        merge: if args.step_weighted {
            MergeStrategy::StepWeighted
        } else {
            MergeStrategy::Uniform
        },
        ..TrainOptions::default()
    };

    println!(
        "replaying {} round(s) of {} with {workers} worker(s), seed {seed}",
        rows.len(),
        args.env.as_str()
    );
    let mut cluster = spawn_cluster(&cluster_cfg, run_args).map_err(CliError::run)?;
    let outcome = train_with_options(&mut cluster, &stop, &options);
    warn_on_dirty_exits(&mut cluster);
    let outcome = outcome.map_err(CliError::run)?;

    let replayed = &outcome.metrics.rows;
    if replayed.len() != rows.len() {
        return Err(CliError::run(format!(
            "replay produced {} row(s), curve has {}",
            replayed.len(),
            rows.len()
        )));
    }
    for (recorded_row, replayed_row) in rows.iter().zip(replayed) {
        // Wall clock is machine-dependent and excluded from the check.
        let same = recorded_row.round == replayed_row.round
            && recorded_row.timesteps == replayed_row.timesteps
            && recorded_row.mean_reward.to_bits() == replayed_row.mean_reward.to_bits()
            && recorded_row.workers == replayed_row.workers
            && recorded_row.seed == replayed_row.seed;
        if !same {
            return Err(CliError::run(format!(
                "round {} diverged: recorded {} steps, reward {}; replayed {} steps, reward {}",
                recorded_row.round,
                recorded_row.timesteps,
                recorded_row.mean_reward,
                replayed_row.timesteps,
                replayed_row.mean_reward
            )));
        }
    }
    println!("replay identical: {} round(s) reproduced exactly", rows.len());
    Ok(())
}
