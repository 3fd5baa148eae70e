//! Offline transition storage and its on-disk text format.
//!
//! File layout: one header line `s_dim a_dim`, then one line per transition
//! `s... a... r s'... terminal(0|1)`, space-separated, full round-trip
//! precision (shortest decimal that parses back to the same f64).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

impl Transition {
    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Free-form description of the data-generating policy.
    pub generator: String,
    pub seed: u64,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        DatasetMeta {
            generator: "unknown".to_string(),
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: file contains no transitions")]
    Empty { path: String },
    #[error("{path}: malformed header line: {reason}")]
    MalformedHeader { path: String, reason: String },
    #[error("{path}: row {row} (line {line}): {reason}")]
    MalformedRow {
        path: String,
        /// 0-based transition index.
        row: usize,
        /// 1-based line number in the file.
        line: usize,
        reason: String,
    },
    #[error("transition {row} has state dims {found}, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("transition {row} is invalid: {reason}")]
    InvalidTransition { row: usize, reason: String },
}

/// An immutable collection of transitions plus generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    transitions: Vec<Transition>,
    pub meta: DatasetMeta,
}

impl OfflineDataset {
    /// Validates dimension consistency and reward finiteness.
    pub fn new(transitions: Vec<Transition>, meta: DatasetMeta) -> Result<Self, DatasetError> {
        if let Some(first) = transitions.first() {
            let (sd, ad) = (first.state_dim(), first.action_dim());
            for (i, t) in transitions.iter().enumerate() {
                if t.state_dim() != sd || t.next_state.len() != sd {
                    return Err(DatasetError::DimensionMismatch {
                        row: i,
                        expected: sd,
                        found: t.state_dim().max(t.next_state.len()),
                    });
                }
                if t.action_dim() != ad {
                    return Err(DatasetError::DimensionMismatch {
                        row: i,
                        expected: ad,
                        found: t.action_dim(),
                    });
                }
                if !t.reward.is_finite() {
                    return Err(DatasetError::InvalidTransition {
                        row: i,
                        reason: "non-finite reward".to_string(),
                    });
                }
            }
        }
        Ok(OfflineDataset { transitions, meta })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn state_dim(&self) -> usize {
        self.transitions.first().map_or(0, |t| t.state_dim())
    }

    pub fn action_dim(&self) -> usize {
        self.transitions.first().map_or(0, |t| t.action_dim())
    }

    /// Serializes to the documented text format.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.state_dim(), self.action_dim());
        for t in &self.transitions {
            let mut fields: Vec<String> = Vec::new();
            fields.extend(t.state.iter().map(|v| format!("{v}")));
            fields.extend(t.action.iter().map(|v| format!("{v}")));
            fields.push(format!("{}", t.reward));
            fields.extend(t.next_state.iter().map(|v| format!("{v}")));
            fields.push(if t.terminal { "1" } else { "0" }.to_string());
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        fs::write(path, out).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Parses the documented text format. Errors name the offending line.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let p = || path.display().to_string();
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| DatasetError::Empty { path: p() })?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 2 {
            return Err(DatasetError::MalformedHeader {
                path: p(),
                reason: format!("expected `s_dim a_dim`, found {} fields", dims.len()),
            });
        }
        let s_dim: usize = dims[0].parse().map_err(|_| DatasetError::MalformedHeader {
            path: p(),
            reason: format!("bad state dimension `{}`", dims[0]),
        })?;
        let a_dim: usize = dims[1].parse().map_err(|_| DatasetError::MalformedHeader {
            path: p(),
            reason: format!("bad action dimension `{}`", dims[1]),
        })?;
        let expected = 2 * s_dim + a_dim + 2;
        let mut transitions = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row = transitions.len();
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != expected {
                return Err(DatasetError::MalformedRow {
                    path: p(),
                    row,
                    line: lineno + 1,
                    reason: format!("expected {expected} fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64, DatasetError> {
                s.parse::<f64>().map_err(|_| DatasetError::MalformedRow {
                    path: p(),
                    row,
                    line: lineno + 1,
                    reason: format!("cannot parse `{s}` as a number"),
                })
            };
            let mut it = fields.iter();
            let mut take = |n: usize| -> Result<Vec<f64>, DatasetError> {
                (0..n).map(|_| parse(it.next().unwrap())).collect()
            };
            let state = take(s_dim)?;
            let action = take(a_dim)?;
            let reward = take(1)?[0];
            let next_state = take(s_dim)?;
            let terminal = match *it.next().unwrap() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(DatasetError::MalformedRow {
                        path: p(),
                        row,
                        line: lineno + 1,
                        reason: format!("terminal flag must be 0 or 1, found `{other}`"),
                    })
                }
            };
            transitions.push(Transition {
                state,
                action,
                reward,
                next_state,
                terminal,
            });
        }
        if transitions.is_empty() {
            return Err(DatasetError::Empty { path: p() });
        }
        OfflineDataset::new(transitions, DatasetMeta::default())
    }

    /// Visit counts |D(s,a)| on a uniform grid, for 1-D tasks. Out-of-range
    /// values clip to the edge bins so the counts always sum to `len()`.
    pub fn visit_counts(&self, grid: &GridSpec) -> BTreeMap<(usize, usize), u64> {
        assert_eq!(self.state_dim(), 1, "visit counts support 1-D states only");
        assert_eq!(self.action_dim(), 1, "visit counts support 1-D actions only");
        let mut counts = BTreeMap::new();
        for t in &self.transitions {
            let sb = grid.bin(t.state[0], grid.s_range, grid.s_bins);
            let ab = grid.bin(t.action[0], grid.a_range, grid.a_bins);
            *counts.entry((sb, ab)).or_insert(0) += 1;
        }
        counts
    }
}

/// Uniform discretization grid over a 1-D (s, a) box.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub s_bins: usize,
    pub a_bins: usize,
    pub s_range: (f64, f64),
    pub a_range: (f64, f64),
}

impl GridSpec {
    pub fn new(s_bins: usize, a_bins: usize, s_range: (f64, f64), a_range: (f64, f64)) -> Self {
        GridSpec {
            s_bins,
            a_bins,
            s_range,
            a_range,
        }
    }

    fn bin(&self, v: f64, range: (f64, f64), bins: usize) -> usize {
        let (lo, hi) = range;
        let x = ((v - lo) / (hi - lo) * bins as f64).floor();
        (x.max(0.0) as usize).min(bins - 1)
    }
}

impl Default for GridSpec {
    /// 20x20 over s in [0, 1.5], a in [-1, 1] (the toy task's reachable box).
    fn default() -> Self {
        GridSpec::new(20, 20, (0.0, 1.5), (-1.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> OfflineDataset {
        let t = |s: f64, a: f64, r: f64, s2: f64| Transition {
            state: vec![s],
            action: vec![a],
            reward: r,
            next_state: vec![s2],
            terminal: false,
        };
        OfflineDataset::new(
            vec![t(0.5, 0.0, 0.5, 1.0), t(0.25, -0.125, 0.25, 0.8)],
            DatasetMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn save_load_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        let ds = tiny();
        ds.save(&path).unwrap();
        let back = OfflineDataset::load(&path).unwrap();
        assert_eq!(ds.transitions(), back.transitions());
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            OfflineDataset::load(&path),
            Err(DatasetError::Empty { .. })
        ));
        // header but no rows is also empty
        std::fs::write(&path, "1 1\n").unwrap();
        assert!(matches!(
            OfflineDataset::load(&path),
            Err(DatasetError::Empty { .. })
        ));
    }

    #[test]
    fn short_row_reports_its_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "1 1\n0.5 0 0.5 1 0\n0.1 0 0.2 1\n").unwrap();
        match OfflineDataset::load(&path) {
            Err(DatasetError::MalformedRow { row, line, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(line, 3);
            }
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn visit_counts_sum_to_dataset_size() {
        let ds = tiny();
        let counts = ds.visit_counts(&GridSpec::default());
        let total: u64 = counts.values().sum();
        assert_eq!(total, ds.len() as u64);
    }
}
