//! Scaling experiments: the same task trained across a grid of worker
//! counts and seeds, each cell producing a training curve, a final policy,
//! and an accuracy score.
//!
//! Each cell owns a directory `<output_dir>/<env>/<workers>w_s<seed>/`
//! holding `curves_<workers>_<seed>.csv`, `params_<workers>_<seed>.rgp`,
//! and a `cell_<workers>_<seed>.csv` marker that is written last. A rerun
//! of the same plan skips cells whose marker exists, so an interrupted
//! grid resumes instead of repeating finished work. Failed cells leave no
//! marker and are retried on resume. The grid-level `summary.csv` sits in
//! the output directory root.

use std::fs;
use std::path::{Path, PathBuf};

use crate::kinematics::EnvKind;
use crate::ppo::PpoConfig;
use crate::transport::{
    shutdown_cluster, spawn_cluster, write_params_file, ClusterConfig, ClusterMode, WorkerRunArgs,
};

use super::eval::evaluate_policy;
use super::metrics::TrainingMetrics;
use super::train::{train, StopCriterion, StopReason};
use super::CoordError;

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub env: EnvKind,
    /// Cluster sizes to sweep, one column of the grid per entry.
    pub worker_grid: Vec<u32>,
    /// Global seeds to repeat each size with.
    pub seeds: Vec<u64>,
    /// Per-worker learner configuration; `num_workers` is overridden to
    /// match each cell.
    pub ppo: PpoConfig,
    pub stop: StopCriterion,
    pub eval_runs: usize,
    pub mode: ClusterMode,
    /// Worker executable for local-process cells; `None` resolves to the
    /// `armfleet-worker` binary next to the current executable.
    pub worker_binary: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl ExperimentPlan {
    pub fn new(env: EnvKind, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            env,
            worker_grid: vec![1, 2, 4, 8],
            seeds: vec![0, 1, 2],
            ppo: PpoConfig::default(),
            stop: StopCriterion::default(),
            eval_runs: 10,
            mode: ClusterMode::InProcess,
            worker_binary: None,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<(), CoordError> {
        if self.worker_grid.is_empty() || self.seeds.is_empty() {
            return Err(CoordError::BadStop {
                reason: "experiment grid has no cells".to_string(),
            });
        }
        if self.worker_grid.contains(&0) {
            return Err(CoordError::WorkerCountMismatch {
                cfg: 0,
                cluster: 0,
            });
        }
        if self.eval_runs < 2 {
            return Err(CoordError::TooFewRuns {
                got: self.eval_runs,
            });
        }
        self.ppo.validate()?;
        self.stop.validate()
    }
}

/// Outcome of one grid cell. The `*_to_threshold` fields are present only
/// when the run reached the reward threshold; the crossing time and
/// timesteps are interpolated linearly between the bracketing rounds,
/// while `rounds_to_threshold` is the raw index of the crossing round.
/// A failed cell carries the failure text and NaN scores; its curve file
/// may still hold the completed rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub workers: u32,
    pub seed: u64,
    pub reached: bool,
    pub rounds_to_threshold: Option<u32>,
    pub time_to_threshold_s: Option<f64>,
    pub timesteps_to_threshold: Option<f64>,
    pub rounds_total: u32,
    pub timesteps_total: u64,
    pub wall_clock_s: f64,
    pub final_mean_reward: f64,
    pub accuracy_mm: f64,
    pub repeatability_mm: f64,
    pub error: Option<String>,
}

const CELL_HEADER: &str = "workers,seed,reached,rounds_to_threshold,time_to_threshold_s,\
timesteps_to_threshold,rounds_total,timesteps_total,wall_clock_s,final_mean_reward,\
accuracy_mm,repeatability_mm,error";

const CELL_FIELDS: usize = 13;

impl CellResult {
    fn to_csv_row(&self) -> String {
        fn opt<T: std::fmt::Display>(value: &Option<T>) -> String {
            value.as_ref().map(T::to_string).unwrap_or_default()
        }
        // Commas in failure text would shift the columns, so they are
        // folded to semicolons; the error field is always last.
        let error = self
            .error
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n'], ";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.workers,
            self.seed,
            self.reached,
            opt(&self.rounds_to_threshold),
            opt(&self.time_to_threshold_s),
            opt(&self.timesteps_to_threshold),
            self.rounds_total,
            self.timesteps_total,
            self.wall_clock_s,
            self.final_mean_reward,
            self.accuracy_mm,
            self.repeatability_mm,
            error
        )
    }

    fn parse_csv_row(line: &str, line_no: usize) -> Result<Self, CoordError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CELL_FIELDS {
            return Err(CoordError::Csv {
                line: line_no,
                reason: format!("expected {CELL_FIELDS} fields, got {}", fields.len()),
            });
        }
        fn parse<T: std::str::FromStr>(raw: &str, name: &str, line: usize) -> Result<T, CoordError>
        where
            T::Err: std::fmt::Display,
        {
            raw.parse().map_err(|e| CoordError::Csv {
                line,
                reason: format!("{name} `{raw}`: {e}"),
            })
        }
        fn parse_opt<T: std::str::FromStr>(
            raw: &str,
            name: &str,
            line: usize,
        ) -> Result<Option<T>, CoordError>
        where
            T::Err: std::fmt::Display,
        {
            if raw.is_empty() {
                Ok(None)
            } else {
                parse(raw, name, line).map(Some)
            }
        }
        Ok(Self {
            workers: parse(fields[0], "workers", line_no)?,
            seed: parse(fields[1], "seed", line_no)?,
            reached: parse(fields[2], "reached", line_no)?,
            rounds_to_threshold: parse_opt(fields[3], "rounds_to_threshold", line_no)?,
            time_to_threshold_s: parse_opt(fields[4], "time_to_threshold_s", line_no)?,
            timesteps_to_threshold: parse_opt(fields[5], "timesteps_to_threshold", line_no)?,
            rounds_total: parse(fields[6], "rounds_total", line_no)?,
            timesteps_total: parse(fields[7], "timesteps_total", line_no)?,
            wall_clock_s: parse(fields[8], "wall_clock_s", line_no)?,
            final_mean_reward: parse(fields[9], "final_mean_reward", line_no)?,
            accuracy_mm: parse(fields[10], "accuracy_mm", line_no)?,
            repeatability_mm: parse(fields[11], "repeatability_mm", line_no)?,
            error: if fields[12].is_empty() {
                None
            } else {
                Some(fields[12].to_string())
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSummary {
    pub cells: Vec<CellResult>,
}

impl ExperimentSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CELL_HEADER);
        out.push('\n');
        for cell in &self.cells {
            out.push_str(&cell.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, CoordError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CELL_HEADER => {}
            _ => {
                return Err(CoordError::Csv {
                    line: 1,
                    reason: format!("header is not `{CELL_HEADER}`"),
                });
            }
        }
        let mut cells = Vec::new();
        for (index, line) in lines {
            if !line.is_empty() {
                cells.push(CellResult::parse_csv_row(line, index + 1)?);
            }
        }
        Ok(Self { cells })
    }

    /// Median interpolated crossing time over the cells of one worker
    /// count; `None` when no such cell reached the threshold.
    pub fn median_time_to_threshold(&self, workers: u32) -> Option<f64> {
        self.median_of(workers, |cell| cell.time_to_threshold_s)
    }

    /// Median interpolated crossing timesteps over the cells of one worker
    /// count; `None` when no such cell reached the threshold.
    pub fn median_timesteps_to_threshold(&self, workers: u32) -> Option<f64> {
        self.median_of(workers, |cell| cell.timesteps_to_threshold)
    }

    fn median_of(&self, workers: u32, field: impl Fn(&CellResult) -> Option<f64>) -> Option<f64> {
        let mut values: Vec<f64> = self
            .cells
            .iter()
            .filter(|cell| cell.workers == workers)
            .filter_map(field)
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let mid = values.len() / 2;
        Some(if values.len() % 2 == 1 {
            values[mid]
        } else {
            (values[mid - 1] + values[mid]) / 2.0
        })
    }
}

fn cell_dir(plan: &ExperimentPlan, workers: u32, seed: u64) -> PathBuf {
    plan.output_dir
        .join(plan.env.as_str())
        .join(format!("{workers}w_s{seed}"))
}

fn curves_path(dir: &Path, workers: u32, seed: u64) -> PathBuf {
    dir.join(format!("curves_{workers}_{seed}.csv"))
}

fn params_path(dir: &Path, workers: u32, seed: u64) -> PathBuf {
    dir.join(format!("params_{workers}_{seed}.rgp"))
}

fn cell_path(dir: &Path, workers: u32, seed: u64) -> PathBuf {
    dir.join(format!("cell_{workers}_{seed}.csv"))
}

/// Runs every grid cell in order, resuming past completed ones, and writes
/// `summary.csv` when the grid is done. A failing cell is recorded in the
/// summary and does not stop the rest of the grid.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentSummary, CoordError> {
    plan.validate()?;
    fs::create_dir_all(&plan.output_dir)?;

    let mut cells = Vec::new();
    for &workers in &plan.worker_grid {
        for &seed in &plan.seeds {
            let dir = cell_dir(plan, workers, seed);
            let marker = cell_path(&dir, workers, seed);
            let cell = if marker.is_file() {
                load_cell(&marker)?
            } else {
                run_cell(plan, workers, seed)
            };
            cells.push(cell);
        }
    }

    let summary = ExperimentSummary { cells };
    fs::write(plan.output_dir.join("summary.csv"), summary.to_csv())?;
    Ok(summary)
}

fn load_cell(marker: &Path) -> Result<CellResult, CoordError> {
    let text = fs::read_to_string(marker)?;
    let parsed = ExperimentSummary::parse_csv(&text)?;
    match parsed.cells.len() {
        1 => Ok(parsed.cells.into_iter().next().expect("one cell")),
        n => Err(CoordError::Csv {
            line: 1,
            reason: format!("cell marker {} holds {n} rows", marker.display()),
        }),
    }
}

fn run_cell(plan: &ExperimentPlan, workers: u32, seed: u64) -> CellResult {
    match try_run_cell(plan, workers, seed) {
        Ok(cell) => cell,
        Err(e) => CellResult {
            workers,
            seed,
            reached: false,
            rounds_to_threshold: None,
            time_to_threshold_s: None,
            timesteps_to_threshold: None,
            rounds_total: 0,
            timesteps_total: 0,
            wall_clock_s: 0.0,
            final_mean_reward: f64::NAN,
            accuracy_mm: f64::NAN,
            repeatability_mm: f64::NAN,
            error: Some(e.to_string()),
        },
    }
}

/// Interpolated (crossing round, wall-clock seconds, timesteps) for the
/// first row at or above `threshold`. The reward is treated as linear in
/// both time and timesteps between the bracketing rounds; a crossing at
/// the first row, or on a non-increasing segment, keeps that row's raw
/// values.
fn threshold_crossing(metrics: &TrainingMetrics, threshold: f64) -> Option<(u32, f64, f64)> {
    let rows = &metrics.rows;
    let hit = rows.iter().position(|row| row.mean_reward >= threshold)?;
    let row = &rows[hit];
    if hit == 0 {
        return Some((row.round, row.wall_clock_s, row.timesteps as f64));
    }
    let prev = &rows[hit - 1];
    let span = row.mean_reward - prev.mean_reward;
    if span <= 0.0 {
        return Some((row.round, row.wall_clock_s, row.timesteps as f64));
    }
    let frac = (threshold - prev.mean_reward) / span;
    Some((
        row.round,
        prev.wall_clock_s + frac * (row.wall_clock_s - prev.wall_clock_s),
        prev.timesteps as f64 + frac * (row.timesteps as f64 - prev.timesteps as f64),
    ))
}

fn try_run_cell(plan: &ExperimentPlan, workers: u32, seed: u64) -> Result<CellResult, CoordError> {
    let dir = cell_dir(plan, workers, seed);
    fs::create_dir_all(&dir)?;

    let mut cluster_cfg = ClusterConfig::for_workers(workers)?;
    cluster_cfg.mode = plan.mode;
    let mut ppo = plan.ppo.clone();
    ppo.num_workers = workers;
    let mut run_args = WorkerRunArgs::new(plan.env, seed, ppo);
    run_args.worker_binary = plan.worker_binary.clone();

    let mut cluster = spawn_cluster(&cluster_cfg, run_args)?;
    let outcome = train(&mut cluster, &plan.stop);
    shutdown_cluster(&mut cluster);

    let outcome = match outcome {
        Ok(outcome) => outcome,
        Err(failure) => {
            // The rounds that completed are still worth keeping for
            // inspection, even though the cell will be retried on resume.
            let _ = failure.partial.write(curves_path(&dir, workers, seed));
            return Err(failure.source);
        }
    };

    outcome.metrics.write(curves_path(&dir, workers, seed))?;
    write_params_file(&params_path(&dir, workers, seed), &outcome.params)?;

    let score = evaluate_policy(&outcome.params, &plan.env.spec(), plan.eval_runs, seed)?;
    let reached = outcome.stop == StopReason::RewardThreshold;
    let crossing = if reached {
        threshold_crossing(&outcome.metrics, plan.stop.reward_threshold)
    } else {
        None
    };
    let last = outcome.metrics.last();
    let cell = CellResult {
        workers,
        seed,
        reached,
        rounds_to_threshold: crossing.map(|(round, _, _)| round),
        time_to_threshold_s: crossing.map(|(_, time, _)| time),
        timesteps_to_threshold: crossing.map(|(_, _, steps)| steps),
        rounds_total: last.map(|row| row.round).unwrap_or(0),
        timesteps_total: last.map(|row| row.timesteps).unwrap_or(0),
        wall_clock_s: last.map(|row| row.wall_clock_s).unwrap_or(0.0),
        final_mean_reward: last.map(|row| row.mean_reward).unwrap_or(f64::NAN),
        accuracy_mm: score.accuracy_mm,
        repeatability_mm: score.repeatability_mm,
        error: None,
    };

    // The marker is the completion flag, so it goes down only after every
    // other artifact of the cell is on disk.
    fs::write(
        cell_path(&dir, workers, seed),
        format!("{CELL_HEADER}\n{}\n", cell.to_csv_row()),
    )?;
    Ok(cell)
}

/// Human-readable grid summary, one line per cell.
pub fn report(summary: &ExperimentSummary) -> String {
    fn opt_col(value: Option<f64>, width: usize, precision: usize) -> String {
        match value {
            Some(v) => format!("{v:>width$.precision$}"),
            None => format!("{:>width$}", "-"),
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{:>7} {:>6} {:>7} {:>13} {:>15} {:>18} {:>11} {:>9}\n",
        "workers",
        "seed",
        "reached",
        "rounds_to_thr",
        "time_to_thr_s",
        "timesteps_to_thr",
        "accuracy_mm",
        "repeat_mm"
    ));
    for cell in &summary.cells {
        match &cell.error {
            Some(error) => out.push_str(&format!(
                "{:>7} {:>6} failed: {error}\n",
                cell.workers, cell.seed
            )),
            None => out.push_str(&format!(
                "{:>7} {:>6} {:>7} {} {} {} {:>11.2} {:>9.2}\n",
                cell.workers,
                cell.seed,
                cell.reached,
                opt_col(cell.rounds_to_threshold.map(f64::from), 13, 0),
                opt_col(cell.time_to_threshold_s, 15, 1),
                opt_col(cell.timesteps_to_threshold, 18, 0),
                cell.accuracy_mm,
                cell.repeatability_mm
            )),
        }
    }
    out
}
