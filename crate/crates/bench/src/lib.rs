//! Experiment runner and reports for `raps-core`: TOML configs, multi-seed
//! training, JSONL metrics, policy snapshots, and SVG/TSV comparisons.

pub mod compare;
pub mod config;
pub mod error;
pub mod metrics;
pub mod runner;
pub mod snapshot;
pub mod stats;
pub mod svg;
pub mod usage;

pub use compare::{compare, CompareReport};
pub use config::{Ablation, ExperimentConfig, Mode};
pub use error::{BenchError, Result};
pub use runner::{eval_snapshot, run, RunRecord, RunReport};
pub use usage::{log_primitive_usage, UsageSummary};
