//! Per-seed metrics stream: `metrics.jsonl` holds a header line followed by
//! one row per evaluation; wall-clock readings go to `timing.jsonl` so the
//! metrics file depends only on config and seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use raps_core::rl::Budget;
use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::error::{BenchError, Result};
use crate::usage::UsageSummary;

pub const SCHEMA: &str = "raps-metrics/1";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";

pub const ROW_FIELDS: [&str; 12] = [
    "training_steps",
    "low_level_steps",
    "decisions",
    "success_rate",
    "mean_return",
    "usage",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
    "grad_norm",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsHeader {
    pub schema: String,
    pub fields: Vec<String>,
    pub config_hash: String,
    pub label: String,
    pub task: String,
    pub mode: Mode,
    pub seed: u64,
    /// Library in action-index order (empty in raw mode).
    pub primitives: Vec<String>,
    pub high_level_horizon: u32,
    /// Longest primitive horizon; 1 in raw mode.
    pub max_primitive_horizon: u32,
    pub multi_task: bool,
    pub max_return: u64,
    pub num_envs: usize,
    pub rollout_len: usize,
    pub eval_interval: u64,
    pub eval_episodes: u32,
    pub budget: Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub training_steps: u64,
    pub low_level_steps: u64,
    pub decisions: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub usage: UsageSummary,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

impl MetricsRow {
    fn floats(&self) -> [f64; 9] {
        [
            self.success_rate,
            self.mean_return,
            self.usage.unique_mean,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.approx_kl,
            self.clip_fraction,
            self.grad_norm,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub training_steps: u64,
    pub wall_clock_s: f64,
}

/// Append-only writer for one seed directory.
pub struct MetricsWriter {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    dir: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(dir: &Path, header: &MetricsHeader) -> Result<Self> {
        let open = |name: &str| {
            let p = dir.join(name);
            File::create(&p)
                .map(BufWriter::new)
                .map_err(BenchError::io("cannot create", &p))
        };
        let mut w = Self {
            metrics: open(METRICS_FILE)?,
            timing: open(TIMING_FILE)?,
            dir: dir.to_path_buf(),
        };
        let line = serde_json::to_string(header).expect("header serializes");
        w.line_metrics(&line)?;
        Ok(w)
    }

    fn line_metrics(&mut self, line: &str) -> Result<()> {
        let p = self.dir.join(METRICS_FILE);
        writeln!(self.metrics, "{line}")
            .and_then(|_| self.metrics.flush())
            .map_err(BenchError::io("cannot write", &p))
    }

    /// Write one row. Non-finite values are refused rather than written.
    pub fn write(&mut self, row: &MetricsRow, wall_clock_s: f64) -> Result<()> {
        if row.floats().iter().any(|v| !v.is_finite()) {
            return Err(BenchError::Numeric(format!(
                "non-finite metric at training step {}",
                row.training_steps
            )));
        }
        let line = serde_json::to_string(row).expect("row serializes");
        self.line_metrics(&line)?;
        let t = TimingRow {
            training_steps: row.training_steps,
            wall_clock_s,
        };
        let p = self.dir.join(TIMING_FILE);
        writeln!(self.timing, "{}", serde_json::to_string(&t).expect("timing serializes"))
            .and_then(|_| self.timing.flush())
            .map_err(BenchError::io("cannot write", &p))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(BenchError::io("cannot open", path))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(BenchError::io("cannot read", path))
}

/// Parse a metrics file, checking every row against the header's fields.
pub fn read_metrics(path: &Path) -> Result<(MetricsHeader, Vec<MetricsRow>)> {
    let lines = read_lines(path)?;
    let (first, rest) = lines
        .split_first()
        .ok_or_else(|| BenchError::format(path, "empty file"))?;
    let header: MetricsHeader =
        serde_json::from_str(first).map_err(|e| BenchError::format(path, format!("header: {e}")))?;
    if header.schema != SCHEMA {
        return Err(BenchError::format(path, format!("unknown schema `{}`", header.schema)));
    }
    let mut rows = Vec::with_capacity(rest.len());
    for (i, line) in rest.iter().enumerate() {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| BenchError::format(path, format!("row {}: {e}", i + 1)))?;
        let keys: Vec<&str> = value
            .as_object()
            .map(|o| o.keys().map(String::as_str).collect())
            .unwrap_or_default();
        if keys.len() != header.fields.len() || header.fields.iter().any(|f| !keys.contains(&f.as_str())) {
            return Err(BenchError::format(
                path,
                format!("row {} does not match the header fields", i + 1),
            ));
        }
        let row: MetricsRow =
            serde_json::from_value(value).map_err(|e| BenchError::format(path, format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn read_timing(path: &Path) -> Result<Vec<TimingRow>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| BenchError::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}
