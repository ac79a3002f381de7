//! Replica-style cluster configuration: a flat key-value file using the
//! orchestration vocabulary (replicas, image, cpu/memory limits).

use std::fmt;
use std::str::FromStr;

use super::TransportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMode {
    /// Workers run as threads inside the coordinator process, wired through
    /// in-memory channels that still carry encoded frames.
    InProcess,
    /// Workers are spawned as local child processes connected over TCP.
    LocalProcesses,
    /// The coordinator only listens; externally started workers connect.
    Remote,
}

impl ClusterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterMode::InProcess => "in-process",
            ClusterMode::LocalProcesses => "local-processes",
            ClusterMode::Remote => "remote",
        }
    }
}

impl fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in-process" => Ok(ClusterMode::InProcess),
            "local-processes" => Ok(ClusterMode::LocalProcesses),
            "remote" => Ok(ClusterMode::Remote),
            other => Err(format!(
                "unknown mode `{other}` (expected in-process, local-processes, or remote)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub replicas: u32,
    pub workers_per_replica: u32,
    /// Echoed in reports; not enforced (no container runtime).
    pub cpu_limit: String,
    /// Echoed in reports; not enforced.
    pub memory_limit: String,
    pub listen_address: String,
    pub mode: ClusterMode,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            replicas: 1,
            workers_per_replica: 1,
            cpu_limit: "4".to_string(),
            memory_limit: "3.8Gi".to_string(),
            listen_address: "127.0.0.1:0".to_string(),
            mode: ClusterMode::InProcess,
        }
    }
}

impl ClusterConfig {
    pub fn total_workers(&self) -> u32 {
        self.replicas * self.workers_per_replica
    }

    /// Smallest replica layout for `total` workers that respects the
    /// 4-per-machine bound: the largest divisor of `total` at most 4 becomes
    /// workers_per_replica.
    pub fn for_workers(total: u32) -> Result<Self, TransportError> {
        if total == 0 {
            return Err(TransportError::ClusterConfig {
                line: 0,
                reason: "worker count must be >= 1".to_string(),
            });
        }
        let wpr = (1..=4u32.min(total))
            .rev()
            .find(|w| total % w == 0)
            .expect("1 always divides");
        Ok(Self {
            replicas: total / wpr,
            workers_per_replica: wpr,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.replicas < 1 {
            return Err(TransportError::ClusterConfig {
                line: 0,
                reason: "replicas must be >= 1".to_string(),
            });
        }
        if !(1..=4).contains(&self.workers_per_replica) {
            return Err(TransportError::WorkersPerReplica {
                got: self.workers_per_replica as i64,
            });
        }
        Ok(())
    }
}

/// Parses `key: value` lines (# comments, blank lines, optional quotes around
/// values). Returns the config and a warning per unknown key; `image` is
/// accepted and ignored without a warning. `replicas` is required.
pub fn parse_cluster_config(
    text: &str,
) -> Result<(ClusterConfig, Vec<String>), TransportError> {
    let mut cfg = ClusterConfig::default();
    let mut warnings = Vec::new();
    let mut seen_replicas = false;
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or(TransportError::ClusterConfig {
            line: line_no,
            reason: "expected `key: value`".to_string(),
        })?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if seen.iter().any(|k| k == key) {
            return Err(TransportError::ClusterConfig {
                line: line_no,
                reason: format!("duplicate key `{key}`"),
            });
        }
        seen.push(key.to_string());

        match key {
            "replicas" => {
                let n: i64 = value.parse().map_err(|_| TransportError::ClusterConfig {
                    line: line_no,
                    reason: format!("replicas `{value}` is not an integer"),
                })?;
                if n < 1 || n > u32::MAX as i64 {
                    return Err(TransportError::ClusterConfig {
                        line: line_no,
                        reason: format!("replicas {n} must be >= 1"),
                    });
                }
                cfg.replicas = n as u32;
                seen_replicas = true;
            }
            "workers_per_replica" => {
                let n: i64 = value.parse().map_err(|_| TransportError::ClusterConfig {
                    line: line_no,
                    reason: format!("workers_per_replica `{value}` is not an integer"),
                })?;
                if !(1..=4).contains(&n) {
                    return Err(TransportError::WorkersPerReplica { got: n });
                }
                cfg.workers_per_replica = n as u32;
            }
            "cpu" => cfg.cpu_limit = value.to_string(),
            "memory" => cfg.memory_limit = value.to_string(),
            "listen_address" => cfg.listen_address = value.to_string(),
            "mode" => {
                cfg.mode = value.parse().map_err(|reason| TransportError::ClusterConfig {
                    line: line_no,
                    reason,
                })?;
            }
            "image" => {}
            other => warnings.push(format!("line {line_no}: unknown key `{other}` ignored")),
        }
    }

    if !seen_replicas {
        return Err(TransportError::MissingReplicas);
    }
    cfg.validate()?;
    Ok((cfg, warnings))
}

/// Inverse of parse_cluster_config for the known keys.
pub fn format_cluster_config(cfg: &ClusterConfig) -> String {
    format!(
        "replicas: {}\nworkers_per_replica: {}\ncpu: \"{}\"\nmemory: \"{}\"\nlisten_address: {}\nmode: {}\n",
        cfg.replicas,
        cfg.workers_per_replica,
        cfg.cpu_limit,
        cfg.memory_limit,
        cfg.listen_address,
        cfg.mode
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_replica_schema() {
        let text = "replicas: 12\nimage: hub.example/worker:latest\ncpu: \"4\"\nmemory: \"3.8Gi\"\n";
        let (cfg, warnings) = parse_cluster_config(text).unwrap();
        assert_eq!(cfg.replicas, 12);
        assert_eq!(cfg.workers_per_replica, 1);
        assert_eq!(cfg.cpu_limit, "4");
        assert_eq!(cfg.memory_limit, "3.8Gi");
        assert!(warnings.is_empty());
        assert_eq!(cfg.total_workers(), 12);
    }

    #[test]
    fn minimal_config_and_round_trip() {
        let (cfg, _) = parse_cluster_config("replicas: 1\nworkers_per_replica: 1\n").unwrap();
        assert_eq!(cfg.total_workers(), 1);
        let (back, warnings) = parse_cluster_config(&format_cluster_config(&cfg)).unwrap();
        assert_eq!(back, cfg);
        assert!(warnings.is_empty());
    }

    #[test]
    fn zero_replicas_and_missing_replicas_are_errors() {
        assert!(matches!(
            parse_cluster_config("replicas: 0\n"),
            Err(TransportError::ClusterConfig { line: 1, .. })
        ));
        assert!(matches!(
            parse_cluster_config("mode: remote\n"),
            Err(TransportError::MissingReplicas)
        ));
    }

    #[test]
    fn workers_per_replica_bound_is_cited() {
        let err = parse_cluster_config("replicas: 2\nworkers_per_replica: 7\n").unwrap_err();
        assert!(err.to_string().contains("4 workers"));
        assert!(matches!(
            err,
            TransportError::WorkersPerReplica { got: 7 }
        ));
    }

    #[test]
    fn unknown_keys_warn_but_do_not_fail() {
        let (cfg, warnings) =
            parse_cluster_config("replicas: 3\nfoo: bar\nsecurityContext: true\n").unwrap();
        assert_eq!(cfg.replicas, 3);
        assert_eq!(warnings.len(), 2);
        assert!(warnings[0].contains("foo"));
    }

    #[test]
    fn duplicate_keys_and_malformed_lines_fail_with_line_numbers() {
        assert!(matches!(
            parse_cluster_config("replicas: 1\nreplicas: 2\n"),
            Err(TransportError::ClusterConfig { line: 2, .. })
        ));
        assert!(matches!(
            parse_cluster_config("replicas 1\n"),
            Err(TransportError::ClusterConfig { line: 1, .. })
        ));
    }

    #[test]
    fn worker_count_mapping_respects_the_bound() {
        for (total, replicas, wpr) in
            [(1, 1, 1), (2, 1, 2), (4, 1, 4), (8, 2, 4), (6, 2, 3), (5, 5, 1)]
        {
            let cfg = ClusterConfig::for_workers(total).unwrap();
            assert_eq!((cfg.replicas, cfg.workers_per_replica), (replicas, wpr));
            assert_eq!(cfg.total_workers(), total);
            cfg.validate().unwrap();
        }
        assert!(ClusterConfig::for_workers(0).is_err());
    }

    #[test]
    fn mode_values_parse() {
        for (s, mode) in [
            ("in-process", ClusterMode::InProcess),
            ("local-processes", ClusterMode::LocalProcesses),
            ("remote", ClusterMode::Remote),
        ] {
            let (cfg, _) =
                parse_cluster_config(&format!("replicas: 1\nmode: {s}\n")).unwrap();
            assert_eq!(cfg.mode, mode);
        }
        assert!(parse_cluster_config("replicas: 1\nmode: docker\n").is_err());
    }
}
