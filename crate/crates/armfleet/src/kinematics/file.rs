//! Key-value chain definition files.
//!
//! A chain file is a sequence of `[joint]` sections, each with `kind`,
//! `axis`, `offset`, and `limits` keys:
//!
//! ```text
//! # two-link planar arm
//! [joint]
//! kind = revolute
//! axis = 0 0 1
//! offset = 0.3 0 0
//! limits = -3.141592653589793 3.141592653589793
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use super::chain::{Joint, JointKind, KinematicChain};
use super::KinematicsError;

pub fn parse_chain_file(text: &str) -> Result<KinematicChain, KinematicsError> {
    let mut joints = Vec::new();
    let mut pending: Option<PendingJoint> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[joint]" {
            if let Some(p) = pending.take() {
                joints.push(p.finish()?);
            }
            pending = Some(PendingJoint::new(line_no));
            continue;
        }
        if line.starts_with('[') {
            return Err(fail(
                line_no,
                format!("unknown section {line:?}, expected [joint]"),
            ));
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(fail(line_no, "expected key = value".to_string()));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(p) = pending.as_mut() else {
            return Err(fail(
                line_no,
                format!("key {key:?} appears before any [joint] section"),
            ));
        };
        match key {
            "kind" => {
                let kind = match value {
                    "revolute" => JointKind::Revolute,
                    "prismatic" => JointKind::Prismatic,
                    other => {
                        return Err(fail(
                            line_no,
                            format!("kind must be revolute or prismatic, got {other:?}"),
                        ))
                    }
                };
                p.set_kind(kind, line_no)?;
            }
            "axis" => {
                let v = parse_numbers::<3>(value, line_no)?;
                p.set_axis(v, line_no)?;
            }
            "offset" => {
                let v = parse_numbers::<3>(value, line_no)?;
                p.set_offset(v, line_no)?;
            }
            "limits" => {
                let v = parse_numbers::<2>(value, line_no)?;
                p.set_limits(v, line_no)?;
            }
            other => {
                return Err(fail(
                    line_no,
                    format!("unknown key {other:?} (expected kind, axis, offset, or limits)"),
                ))
            }
        }
    }
    if let Some(p) = pending.take() {
        joints.push(p.finish()?);
    }
    KinematicChain::new(joints)
}

/// Inverse of [`parse_chain_file`]; the emitted text parses back to an
/// identical chain.
pub fn format_chain_file(chain: &KinematicChain) -> String {
    let mut out = String::new();
    for j in chain.joints() {
        out.push_str("[joint]\n");
        out.push_str(match j.kind {
            JointKind::Revolute => "kind = revolute\n",
            JointKind::Prismatic => "kind = prismatic\n",
        });
        out.push_str(&format!(
            "axis = {} {} {}\n",
            j.axis[0], j.axis[1], j.axis[2]
        ));
        out.push_str(&format!(
            "offset = {} {} {}\n",
            j.offset[0], j.offset[1], j.offset[2]
        ));
        out.push_str(&format!("limits = {} {}\n\n", j.limit_lo, j.limit_hi));
    }
    out
}

fn fail(line: usize, reason: String) -> KinematicsError {
    KinematicsError::ChainFile { line, reason }
}

fn parse_numbers<const N: usize>(value: &str, line_no: usize) -> Result<[f64; N], KinematicsError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != N {
        return Err(fail(
            line_no,
            format!("expected {N} numbers, got {}", parts.len()),
        ));
    }
    let mut out = [0.0; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        let v: f64 = part
            .parse()
            .map_err(|_| fail(line_no, format!("invalid number {part:?}")))?;
        if !v.is_finite() {
            return Err(fail(line_no, format!("number {part:?} is not finite")));
        }
        *slot = v;
    }
    Ok(out)
}

struct PendingJoint {
    line: usize,
    kind: Option<JointKind>,
    axis: Option<[f64; 3]>,
    offset: Option<[f64; 3]>,
    limits: Option<[f64; 2]>,
}

impl PendingJoint {
    fn new(line: usize) -> Self {
        Self {
            line,
            kind: None,
            axis: None,
            offset: None,
            limits: None,
        }
    }

    fn set_kind(&mut self, v: JointKind, line: usize) -> Result<(), KinematicsError> {
        if self.kind.replace(v).is_some() {
            return Err(fail(line, "duplicate key \"kind\"".to_string()));
        }
        Ok(())
    }

    fn set_axis(&mut self, v: [f64; 3], line: usize) -> Result<(), KinematicsError> {
        if self.axis.replace(v).is_some() {
            return Err(fail(line, "duplicate key \"axis\"".to_string()));
        }
        Ok(())
    }

    fn set_offset(&mut self, v: [f64; 3], line: usize) -> Result<(), KinematicsError> {
        if self.offset.replace(v).is_some() {
            return Err(fail(line, "duplicate key \"offset\"".to_string()));
        }
        Ok(())
    }

    fn set_limits(&mut self, v: [f64; 2], line: usize) -> Result<(), KinematicsError> {
        if self.limits.replace(v).is_some() {
            return Err(fail(line, "duplicate key \"limits\"".to_string()));
        }
        Ok(())
    }

    fn finish(self) -> Result<Joint, KinematicsError> {
        let missing = [
            ("kind", self.kind.is_none()),
            ("axis", self.axis.is_none()),
            ("offset", self.offset.is_none()),
            ("limits", self.limits.is_none()),
        ]
        .iter()
        .filter(|(_, absent)| *absent)
        .map(|(name, _)| *name)
        .collect::<Vec<_>>();
        if !missing.is_empty() {
            return Err(fail(
                self.line,
                format!("[joint] section is missing keys: {}", missing.join(", ")),
            ));
        }
        let limits = self.limits.expect("checked above");
        Ok(Joint {
            kind: self.kind.expect("checked above"),
            axis: self.axis.expect("checked above"),
            offset: self.offset.expect("checked above"),
            limit_lo: limits[0],
            limit_hi: limits[1],
        })
    }
}
