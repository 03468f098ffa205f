use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raps_bench::config::{ENV_OUTPUT_DIR, ENV_WORKERS};
use raps_bench::runner::catalog_with;
use raps_bench::snapshot::Snapshot;
use raps_bench::stats::fmt_opt;
use raps_bench::{compare, eval_snapshot, run, BenchError, ExperimentConfig, Result};
use raps_core::sim::Joint;
use raps_core::{default_library, DofMode};

#[derive(Parser)]
#[command(
    name = "raps",
    version,
    about = "Train and compare primitive-based and raw-action PPO agents"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed of an experiment config.
    Run {
        config: PathBuf,
        #[arg(long, env = ENV_OUTPUT_DIR)]
        output_dir: Option<PathBuf>,
        #[arg(long, env = ENV_WORKERS)]
        workers: Option<usize>,
        /// Replace the config's seed list, e.g. `--seeds 1,2,3`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Charts and a table for two or more runs on the same task.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long, short, default_value = "report")]
        out: PathBuf,
    },
    /// Roll out a saved policy and print its success rate.
    Eval {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Built-in tasks, plus custom ones from a config file.
    ListTasks {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// The primitive library.
    ListPrimitives {
        /// Include the yaw-enabled primitives.
        #[arg(long)]
        yaw: bool,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run {
            config,
            output_dir,
            workers,
            seeds,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::from_toml(&text)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            let report = run(&cfg)?;
            let s = &report.summary;
            println!("{} ({} seeds) -> {}", s.label, s.seeds.len(), report.dir.display());
            println!(
                "final: training_steps {} success {:.3} [{}, {}] return {:.3} [{}, {}]",
                s.final_training_steps,
                s.final_success.mean,
                fmt_opt(s.final_success.lo),
                fmt_opt(s.final_success.hi),
                s.final_return.mean,
                fmt_opt(s.final_return.lo),
                fmt_opt(s.final_return.hi)
            );
            report.status()
        }
        Cmd::Compare { runs, out } => {
            let r = compare(&runs, &out)?;
            for p in r
                .charts
                .iter()
                .chain([&r.table, &r.report])
                .chain(r.usage_chart.iter())
                .chain(r.usage_table.iter())
            {
                println!("{}", p.display());
            }
            Ok(())
        }
        Cmd::Eval {
            snapshot,
            episodes,
            seed,
        } => {
            let snap = Snapshot::load(&snapshot)?;
            let r = eval_snapshot(&snap, episodes, seed)?;
            println!(
                "{}: success {:.3} mean return {:.3} over {} episodes",
                r.task, r.success_rate, r.mean_return, r.episodes
            );
            for c in r.usage.counts.iter().filter(|c| c.calls > 0) {
                println!("  {:<24} {}", c.name, c.calls);
            }
            Ok(())
        }
        Cmd::ListTasks { config } => {
            let custom = match config {
                Some(p) => ExperimentConfig::load(&p)?.custom_tasks,
                None => vec![],
            };
            for (name, t) in catalog_with(&custom)? {
                let s = t.spec();
                let objects: Vec<String> = s
                    .objects
                    .iter()
                    .map(|o| {
                        let kind = match o.joint {
                            Joint::Free => "free",
                            Joint::Prismatic { .. } => "prismatic",
                            Joint::Revolute { .. } => "revolute",
                        };
                        format!("{}:{kind}", o.id)
                    })
                    .collect();
                let goals: Vec<String> = s.goals.iter().map(|g| g.object.clone()).collect();
                println!(
                    "{name:<18} horizon {:>2}  step cap {:>4}  max return {}  objects [{}]  goals [{}]",
                    s.high_level_horizon,
                    s.max_low_level_steps,
                    t.max_return(),
                    objects.join(", "),
                    goals.join(", ")
                );
            }
            Ok(())
        }
        Cmd::ListPrimitives { yaw } => {
            let lib = default_library(if yaw {
                DofMode::PositionYaw
            } else {
                DofMode::PositionOnly
            });
            for (k, p) in lib.specs().iter().enumerate() {
                let args: Vec<String> = p
                    .args
                    .iter()
                    .zip(&p.arg_ranges)
                    .map(|(c, r)| format!("{c:?} [{}, {}]", r[0], r[1]))
                    .collect();
                println!("{k:>2} {:<24} H={:<3} {}", p.name, p.horizon(), args.join(", "));
            }
            Ok(())
        }
    }
}
