//! Multi-seed experiment execution.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use raps_core::rl::{
    eval_seeds, evaluate, train, Clock, CurvePoint, EnvWorker, ObsNormalizer, PolicyParams, RolloutExecutor, Segment,
    StopReason, TrainSetup,
};
use raps_core::tasks::builtin_catalog;
use raps_core::{default_library, ActionMode, PamdpEnv, Task};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode, Resolved};
use crate::error::{BenchError, Result};
use crate::metrics::{MetricsHeader, MetricsRow, MetricsWriter, ROW_FIELDS, SCHEMA};
use crate::snapshot::Snapshot;
use crate::stats::{fmt_opt, mean_ci95, MeanCi};
use crate::usage::{log_primitive_usage, merge, UsageSummary};

pub const SNAPSHOT_FILE: &str = "policy.snap";
pub const RECORD_FILE: &str = "run.json";
pub const SUMMARY_TSV: &str = "summary.tsv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Collects worker segments on the rayon pool. Each worker owns its random
/// stream, so results do not depend on scheduling.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl RolloutExecutor for RayonExecutor {
    fn collect(
        &self,
        workers: &mut [EnvWorker],
        params: &PolicyParams,
        norm: &ObsNormalizer,
        steps: usize,
    ) -> raps_core::Result<Vec<Segment>> {
        workers.par_iter_mut().map(|w| w.collect(params, norm, steps)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InstantClock(Instant);

impl InstantClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for InstantClock {
    fn elapsed_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub training_steps: u64,
    pub wall_clock_s: f64,
    pub low_level_steps: u64,
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub curve: Vec<CurveRow>,
    /// Usage of the evaluation policy at each curve row.
    pub usage: Vec<UsageSummary>,
    pub snapshot: PathBuf,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
    pub numeric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub task: String,
    pub mode: Mode,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
    pub partial: bool,
    pub multi_task: bool,
    pub max_return: u64,
    pub final_training_steps: u64,
    pub final_low_level_steps: f64,
    pub final_wall_clock_s: f64,
    pub final_success: MeanCi,
    pub final_return: MeanCi,
    pub final_usage: Option<UsageSummary>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

impl RunReport {
    /// Error for the CLI when not every seed finished.
    pub fn status(&self) -> Result<()> {
        if self.summary.failures.is_empty() {
            return Ok(());
        }
        let msg = self
            .summary
            .failures
            .iter()
            .map(|f| format!("seed {}: {}", f.seed, f.error))
            .collect::<Vec<_>>()
            .join("; ");
        if self.records.is_empty() {
            if self.summary.failures.iter().all(|f| f.numeric) {
                return Err(BenchError::Numeric(msg));
            }
            return Err(BenchError::Config(msg));
        }
        Err(BenchError::Partial(msg))
    }
}

fn library_names(r: &Resolved) -> Vec<String> {
    r.library
        .as_ref()
        .map(|l| l.names().map(str::to_string).collect())
        .unwrap_or_default()
}

fn header(cfg: &ExperimentConfig, r: &Resolved, seed: u64) -> MetricsHeader {
    let env = PamdpEnv::new(r.task.clone(), r.mode.clone(), cfg.obs_mode);
    MetricsHeader {
        schema: SCHEMA.into(),
        fields: ROW_FIELDS.iter().map(|s| s.to_string()).collect(),
        config_hash: cfg.hash(),
        label: cfg.label(),
        task: cfg.task.clone(),
        mode: cfg.mode,
        seed,
        primitives: library_names(r),
        high_level_horizon: env.horizon(),
        max_primitive_horizon: r.library.as_ref().map_or(1, |l| l.max_horizon()),
        multi_task: r.task.is_multi_task(),
        max_return: r.task.max_return() as u64,
        num_envs: r.ppo.num_envs,
        rollout_len: r.ppo.rollout_len,
        eval_interval: cfg.eval_interval,
        eval_episodes: cfg.eval_episodes,
        budget: cfg.budget,
    }
}

fn row(p: &CurvePoint, names: &[String]) -> MetricsRow {
    let d = &p.diagnostics.mean;
    MetricsRow {
        training_steps: p.training_steps,
        low_level_steps: p.low_level_steps,
        decisions: p.decisions,
        success_rate: p.eval.success_rate,
        mean_return: p.eval.mean_return,
        usage: log_primitive_usage(names, &p.eval.episodes),
        policy_loss: d.policy_loss,
        value_loss: d.value_loss,
        entropy: d.entropy,
        approx_kl: d.approx_kl,
        clip_fraction: d.clip_fraction,
        grad_norm: d.grad_norm,
    }
}

/// Train one seed into `dir`, streaming metrics as evaluations happen.
pub fn run_seed(cfg: &ExperimentConfig, r: &Resolved, seed: u64, dir: &Path) -> Result<RunRecord> {
    fs::create_dir_all(dir).map_err(BenchError::io("cannot create", dir))?;
    let names = library_names(r);
    let mut writer = MetricsWriter::create(dir, &header(cfg, r, seed))?;
    let setup = TrainSetup {
        task: r.task.clone(),
        mode: r.mode.clone(),
        obs_mode: cfg.obs_mode,
        config: r.ppo.clone(),
        seed,
        budget: cfg.budget,
        eval_interval: cfg.eval_interval,
        eval_episodes: cfg.eval_episodes,
    };
    let clock = InstantClock::start();
    let mut curve = Vec::new();
    let mut usage = Vec::new();
    let mut write_err = None;
    let outcome = train(&setup, &clock, &RayonExecutor, &mut |p| {
        let m = row(p, &names);
        if write_err.is_none() {
            write_err = writer.write(&m, p.wall_clock_s).err();
        }
        curve.push(CurveRow {
            training_steps: p.training_steps,
            wall_clock_s: p.wall_clock_s,
            low_level_steps: p.low_level_steps,
            success_rate: p.eval.success_rate,
            mean_return: p.eval.mean_return,
        });
        usage.push(m.usage);
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let snapshot = dir.join(SNAPSHOT_FILE);
    Snapshot {
        task: r.task.spec().clone(),
        mode: cfg.mode,
        dof: r.dof,
        obs_mode: cfg.obs_mode,
        primitives: names,
        params: outcome.params,
        normalizer: outcome.normalizer,
    }
    .save(&snapshot)?;
    let record = RunRecord {
        config_hash: cfg.hash(),
        seed,
        curve,
        usage,
        snapshot,
        stop: outcome.stop,
    };
    let p = dir.join(RECORD_FILE);
    fs::write(&p, serde_json::to_string_pretty(&record).expect("record serializes"))
        .map_err(BenchError::io("cannot write", &p))?;
    Ok(record)
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| BenchError::Config(format!("cannot start worker pool: {e}")))
}

/// Run every seed of `cfg` and write the cross-seed summary. Seeds that fail
/// are recorded in the summary; the others still run to completion.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let r = cfg.resolve()?;
    let dir = cfg.output_dir.join(cfg.label());
    fs::create_dir_all(&dir).map_err(BenchError::io("cannot create", &dir))?;
    let cp = dir.join(CONFIG_FILE);
    fs::write(&cp, cfg.to_toml()).map_err(BenchError::io("cannot write", &cp))?;

    let pool = thread_pool(cfg.workers)?;
    let results: Vec<(u64, Result<RunRecord>)> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| (s, run_seed(cfg, &r, s, &dir.join(format!("seed-{s}")))))
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, res) in results {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(SeedFailure {
                seed,
                numeric: matches!(e, BenchError::Numeric(_)),
                error: e.to_string(),
            }),
        }
    }
    let summary = summarize(cfg, &r.task, &records, failures);
    write_summary(&dir, &summary, &records)?;
    Ok(RunReport { dir, records, summary })
}

fn summarize(cfg: &ExperimentConfig, task: &Task, records: &[RunRecord], failures: Vec<SeedFailure>) -> Summary {
    let last: Vec<&CurveRow> = records.iter().filter_map(|r| r.curve.last()).collect();
    let mean = |f: &dyn Fn(&CurveRow) -> f64| {
        if last.is_empty() {
            0.0
        } else {
            last.iter().map(|c| f(c)).sum::<f64>() / last.len() as f64
        }
    };
    let usages: Vec<&UsageSummary> = records.iter().filter_map(|r| r.usage.last()).collect();
    Summary {
        label: cfg.label(),
        task: cfg.task.clone(),
        mode: cfg.mode,
        config_hash: cfg.hash(),
        seeds: records.iter().map(|r| r.seed).collect(),
        partial: !failures.is_empty(),
        failures,
        multi_task: task.is_multi_task(),
        max_return: task.max_return() as u64,
        final_training_steps: last.iter().map(|c| c.training_steps).max().unwrap_or(0),
        final_low_level_steps: mean(&|c| c.low_level_steps as f64),
        final_wall_clock_s: mean(&|c| c.wall_clock_s),
        final_success: mean_ci95(&last.iter().map(|c| c.success_rate).collect::<Vec<_>>()),
        final_return: mean_ci95(&last.iter().map(|c| c.mean_return).collect::<Vec<_>>()),
        final_usage: if cfg.mode == Mode::Raps { merge(&usages) } else { None },
    }
}

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "training_steps",
    "low_level_steps",
    "wall_clock_s",
    "success_mean",
    "success_ci_lo",
    "success_ci_hi",
    "return_mean",
    "return_ci_lo",
    "return_ci_hi",
    "seeds",
];

/// Per-evaluation means across seeds, truncated to the shortest curve.
fn write_summary(dir: &Path, summary: &Summary, records: &[RunRecord]) -> Result<()> {
    let rows = records.iter().map(|r| r.curve.len()).min().unwrap_or(0);
    let mut out = Vec::new();
    let _ = writeln!(out, "{}", SUMMARY_COLUMNS.join("\t"));
    for i in 0..rows {
        let at: Vec<&CurveRow> = records.iter().map(|r| &r.curve[i]).collect();
        let n = at.len() as f64;
        let s = mean_ci95(&at.iter().map(|c| c.success_rate).collect::<Vec<_>>());
        let g = mean_ci95(&at.iter().map(|c| c.mean_return).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "{}\t{:.1}\t{:.3}\t{:.6}\t{}\t{}\t{:.6}\t{}\t{}\t{}",
            at[0].training_steps,
            at.iter().map(|c| c.low_level_steps as f64).sum::<f64>() / n,
            at.iter().map(|c| c.wall_clock_s).sum::<f64>() / n,
            s.mean,
            fmt_opt(s.lo),
            fmt_opt(s.hi),
            g.mean,
            fmt_opt(g.lo),
            fmt_opt(g.hi),
            at.len()
        );
    }
    let p = dir.join(SUMMARY_TSV);
    fs::write(&p, out).map_err(BenchError::io("cannot write", &p))?;
    let p = dir.join(SUMMARY_JSON);
    fs::write(&p, serde_json::to_string_pretty(summary).expect("summary serializes"))
        .map_err(BenchError::io("cannot write", &p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub episodes: u32,
    pub success_rate: f64,
    pub mean_return: f64,
    pub usage: UsageSummary,
}

/// Roll out a saved policy greedily for `episodes` episodes.
pub fn eval_snapshot(snap: &Snapshot, episodes: u32, seed: u64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(BenchError::Config("episodes must be >= 1".into()));
    }
    let task = Arc::new(Task::new(snap.task.clone())?);
    let mode = match snap.mode {
        Mode::Raw => ActionMode::Raw,
        Mode::Raps => ActionMode::Raps(Arc::new(default_library(snap.dof).subset(&snap.primitives)?)),
    };
    let mut env = PamdpEnv::new(task, mode, snap.obs_mode);
    if env.layout().num_primitives() != snap.params.shape().num_primitives
        || env.layout().total_arg_dim() != snap.params.shape().arg_dim
        || env.obs_dim() != snap.params.shape().obs_dim
    {
        return Err(BenchError::Config(
            "snapshot shape does not match its task and library".into(),
        ));
    }
    let res = evaluate(&mut env, &snap.params, &snap.normalizer, &eval_seeds(seed, episodes))?;
    Ok(EvalReport {
        task: snap.task.name.clone(),
        episodes,
        success_rate: res.success_rate,
        mean_return: res.mean_return,
        usage: log_primitive_usage(&snap.primitives, &res.episodes),
    })
}

/// Built-in tasks plus any from a config's `custom_tasks`.
pub fn catalog_with(custom: &[raps_core::TaskSpec]) -> Result<raps_core::tasks::TaskCatalog> {
    let mut cat = builtin_catalog();
    raps_core::tasks::extend_catalog(&mut cat, custom.to_vec())?;
    Ok(cat)
}
