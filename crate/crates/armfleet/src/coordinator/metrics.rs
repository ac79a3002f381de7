//! Per-round training curves and their CSV form.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! parsed file reproduces the in-memory rows bit for bit and replay checks
//! can compare curves with plain equality.

use std::fs;
use std::path::Path;

use super::CoordError;

pub const CSV_HEADER: &str = "round,timesteps,wall_clock_s,mean_reward,workers,seed";

/// One training round as recorded in the curve file. `timesteps` and
/// `wall_clock_s` are cumulative since the start of the run; `mean_reward`
/// is that round's step-weighted mean per-step reward across workers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub round: u32,
    pub timesteps: u64,
    pub wall_clock_s: f64,
    pub mean_reward: f64,
    pub workers: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMetrics {
    pub rows: Vec<MetricsRow>,
}

impl TrainingMetrics {
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.round, row.timesteps, row.wall_clock_s, row.mean_reward, row.workers, row.seed
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, CoordError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            Some((_, header)) => {
                return Err(CoordError::Csv {
                    line: 1,
                    reason: format!("header `{header}` is not `{CSV_HEADER}`"),
                });
            }
            None => {
                return Err(CoordError::Csv {
                    line: 1,
                    reason: "empty file".to_string(),
                });
            }
        }

        let mut rows = Vec::new();
        for (index, line) in lines {
            if line.is_empty() {
                continue;
            }
            let line_no = index + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(CoordError::Csv {
                    line: line_no,
                    reason: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let field = |i: usize, name: &str| -> Result<&str, CoordError> {
                Ok(fields[i]).and_then(|f| {
                    if f.is_empty() {
                        Err(CoordError::Csv {
                            line: line_no,
                            reason: format!("{name} is empty"),
                        })
                    } else {
                        Ok(f)
                    }
                })
            };
            fn parse<T: std::str::FromStr>(
                raw: &str,
                name: &str,
                line: usize,
            ) -> Result<T, CoordError>
            where
                T::Err: std::fmt::Display,
            {
                raw.parse().map_err(|e| CoordError::Csv {
                    line,
                    reason: format!("{name} `{raw}`: {e}"),
                })
            }
            rows.push(MetricsRow {
                round: parse(field(0, "round")?, "round", line_no)?,
                timesteps: parse(field(1, "timesteps")?, "timesteps", line_no)?,
                wall_clock_s: parse(field(2, "wall_clock_s")?, "wall_clock_s", line_no)?,
                mean_reward: parse(field(3, "mean_reward")?, "mean_reward", line_no)?,
                workers: parse(field(4, "workers")?, "workers", line_no)?,
                seed: parse(field(5, "seed")?, "seed", line_no)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CoordError> {
        Ok(fs::write(path, self.to_csv())?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CoordError> {
        Self::parse_csv(&fs::read_to_string(path)?)
    }
}
