//! Side-by-side report of finished runs on one task.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::Mode;
use crate::error::{BenchError, Result};
use crate::metrics::{read_metrics, read_timing, MetricsHeader, MetricsRow, METRICS_FILE, TIMING_FILE};
use crate::stats::{fmt_opt, mean_ci95, MeanCi};
use crate::svg::{bar_chart, line_chart, Series};
use crate::usage::{merge, UsageSummary};

pub const CLOCKS: [(&str, &str); 3] = [
    ("training_steps", "gradient steps"),
    ("wall_clock_s", "wall-clock seconds"),
    ("low_level_steps", "low-level environment steps"),
];
pub const TABLE_FILE: &str = "comparison.tsv";
pub const USAGE_FILE: &str = "primitive_usage.tsv";
pub const USAGE_CHART: &str = "primitive_usage.svg";
pub const REPORT_FILE: &str = "report.md";

/// One seed's curve with the wall clock joined back in.
#[derive(Debug, Clone)]
pub struct SeedCurve {
    pub header: MetricsHeader,
    pub rows: Vec<MetricsRow>,
    pub wall_clock_s: Vec<f64>,
}

impl SeedCurve {
    fn clock(&self, i: usize, which: &str) -> f64 {
        match which {
            "training_steps" => self.rows[i].training_steps as f64,
            "low_level_steps" => self.rows[i].low_level_steps as f64,
            _ => self.wall_clock_s[i],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub label: String,
    pub task: String,
    pub mode: Mode,
    pub seeds: Vec<SeedCurve>,
}

impl LoadedRun {
    fn rows(&self) -> usize {
        self.seeds.iter().map(|s| s.rows.len()).min().unwrap_or(0)
    }

    /// Cross-seed mean of a clock at each evaluation.
    fn mean_clock(&self, i: usize, which: &str) -> f64 {
        self.seeds.iter().map(|s| s.clock(i, which)).sum::<f64>() / self.seeds.len() as f64
    }

    fn success(&self, i: usize) -> MeanCi {
        mean_ci95(&self.seeds.iter().map(|s| s.rows[i].success_rate).collect::<Vec<_>>())
    }

    fn returns(&self, i: usize) -> MeanCi {
        mean_ci95(&self.seeds.iter().map(|s| s.rows[i].mean_return).collect::<Vec<_>>())
    }
}

/// Read every `seed-*` directory of a run directory.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let entries = fs::read_dir(dir).map_err(BenchError::io("cannot read", dir))?;
    let mut seed_dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(METRICS_FILE).is_file())
        .collect();
    seed_dirs.sort();
    if seed_dirs.is_empty() {
        return Err(BenchError::Config(format!("{} holds no seed results", dir.display())));
    }
    let mut seeds = Vec::new();
    for d in &seed_dirs {
        let (header, rows) = read_metrics(&d.join(METRICS_FILE))?;
        let timing = read_timing(&d.join(TIMING_FILE))?;
        if timing.len() != rows.len()
            || timing
                .iter()
                .zip(&rows)
                .any(|(t, r)| t.training_steps != r.training_steps)
        {
            return Err(BenchError::format(
                &d.join(TIMING_FILE),
                "does not line up with the metrics rows",
            ));
        }
        seeds.push(SeedCurve {
            header,
            rows,
            wall_clock_s: timing.iter().map(|t| t.wall_clock_s).collect(),
        });
    }
    let h = &seeds[0].header;
    if seeds.iter().any(|s| s.header.config_hash != h.config_hash) {
        return Err(BenchError::Config(format!(
            "{} mixes seeds of different configs",
            dir.display()
        )));
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        label: h.label.clone(),
        task: h.task.clone(),
        mode: h.mode,
        seeds,
    })
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub charts: Vec<PathBuf>,
    pub table: PathBuf,
    pub usage_chart: Option<PathBuf>,
    pub usage_table: Option<PathBuf>,
    pub report: PathBuf,
    /// Per-clock x-axis limit shared by every run.
    pub caps: Vec<(String, f64)>,
}

/// Last evaluation index of `run` whose clock is within `cap`.
fn last_within(run: &LoadedRun, which: &str, cap: f64) -> Option<usize> {
    (0..run.rows())
        .rev()
        .find(|&i| run.mean_clock(i, which) <= cap * (1.0 + 1e-9))
}

pub fn compare(run_dirs: &[PathBuf], out: &Path) -> Result<CompareReport> {
    if run_dirs.len() < 2 {
        return Err(BenchError::Config("compare needs at least two run directories".into()));
    }
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let task = &runs[0].task;
    if let Some(r) = runs.iter().find(|r| &r.task != task) {
        return Err(BenchError::Config(format!(
            "runs are on different tasks: {} is `{}`, {} is `{}`",
            runs[0].dir.display(),
            task,
            r.dir.display(),
            r.task
        )));
    }
    if let Some(r) = runs.iter().find(|r| r.rows() == 0) {
        return Err(BenchError::Config(format!("{} has no evaluations", r.dir.display())));
    }
    fs::create_dir_all(out).map_err(BenchError::io("cannot create", out))?;
    let header = &runs[0].seeds[0].header;
    let multi = header.multi_task;
    let (metric, y_max) = if multi {
        ("mean episode return", header.max_return as f64)
    } else {
        ("success rate", 1.0)
    };
    let value = |r: &LoadedRun, i: usize| if multi { r.returns(i) } else { r.success(i) };

    // smallest common budget per clock: the least of each run's final reading
    let caps: Vec<(String, f64)> = CLOCKS
        .iter()
        .map(|(c, _)| {
            let cap = runs
                .iter()
                .map(|r| r.mean_clock(r.rows() - 1, c))
                .fold(f64::INFINITY, f64::min);
            (c.to_string(), cap)
        })
        .collect();

    let mut charts = Vec::new();
    for ((clock, name), (_, cap)) in CLOCKS.iter().zip(&caps) {
        let series: Vec<Series> = runs
            .iter()
            .map(|r| Series {
                label: r.label.clone(),
                points: std::iter::once((0.0, 0.0))
                    .chain((0..r.rows()).map(|i| (r.mean_clock(i, clock), value(r, i).mean)))
                    .collect(),
            })
            .collect();
        let svg = line_chart(
            &format!("{task}: {metric} vs {name}"),
            name,
            metric,
            &series,
            *cap,
            y_max,
        );
        let p = out.join(format!(
            "{metric_slug}_vs_{clock}.svg",
            metric_slug = if multi { "return" } else { "success" }
        ));
        fs::write(&p, svg).map_err(BenchError::io("cannot write", &p))?;
        charts.push(p);
    }

    // table at the last evaluation inside the common gradient-step budget
    let step_cap = caps[0].1;
    let mut table = Vec::new();
    let _ = writeln!(
        table,
        "label\tmode\tseeds\ttraining_steps\tlow_level_steps\twall_clock_s\tsuccess_mean\tsuccess_ci_lo\tsuccess_ci_hi\treturn_mean\treturn_ci_lo\treturn_ci_hi"
    );
    for r in &runs {
        let Some(i) = last_within(r, "training_steps", step_cap) else {
            continue;
        };
        let (s, g) = (r.success(i), r.returns(i));
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{:.0}\t{:.0}\t{:.3}\t{:.6}\t{}\t{}\t{:.6}\t{}\t{}",
            r.label,
            r.mode.as_str(),
            r.seeds.len(),
            r.mean_clock(i, "training_steps"),
            r.mean_clock(i, "low_level_steps"),
            r.mean_clock(i, "wall_clock_s"),
            s.mean,
            fmt_opt(s.lo),
            fmt_opt(s.hi),
            g.mean,
            fmt_opt(g.lo),
            fmt_opt(g.hi)
        );
    }
    let table_path = out.join(TABLE_FILE);
    fs::write(&table_path, table).map_err(BenchError::io("cannot write", &table_path))?;

    let (usage_chart, usage_table) = usage_outputs(&runs, out)?;

    let mut md = Vec::new();
    let _ = writeln!(md, "# {task}\n");
    let _ = writeln!(
        md,
        "Runs: {}\n",
        runs.iter().map(|r| r.label.as_str()).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(md, "Axes are capped at the smallest final reading across runs:\n");
    for ((_, name), (_, cap)) in CLOCKS.iter().zip(&caps) {
        let _ = writeln!(md, "- {name}: {cap:.3}");
    }
    if multi {
        let _ = writeln!(
            md,
            "\nThis is a {}-subtask task scored by mean episode return (one point per subtask). \
             The directional target is a mean return of at least 2, a relaxation of solving three of four subtasks.",
            header.max_return
        );
    }
    let _ = writeln!(
        md,
        "\nTable: {TABLE_FILE}. Charts: {}.",
        charts
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let report = out.join(REPORT_FILE);
    fs::write(&report, md).map_err(BenchError::io("cannot write", &report))?;

    Ok(CompareReport {
        charts,
        table: table_path,
        usage_chart,
        usage_table,
        report,
        caps,
    })
}

/// Final-evaluation call counts of every primitive-mode run, summed over seeds.
fn usage_outputs(runs: &[LoadedRun], out: &Path) -> Result<(Option<PathBuf>, Option<PathBuf>)> {
    let usage: Vec<(String, UsageSummary)> = runs
        .iter()
        .filter(|r| r.mode == Mode::Raps)
        .filter_map(|r| {
            let last: Vec<&UsageSummary> = r.seeds.iter().filter_map(|s| s.rows.last().map(|x| &x.usage)).collect();
            merge(&last).map(|u| (r.label.clone(), u))
        })
        .collect();
    if usage.is_empty() {
        return Ok((None, None));
    }
    let mut names: Vec<String> = Vec::new();
    for (_, u) in &usage {
        for c in &u.counts {
            if !names.contains(&c.name) {
                names.push(c.name.clone());
            }
        }
    }
    let series: Vec<(String, Vec<f64>)> = usage
        .iter()
        .map(|(l, u)| {
            (
                l.clone(),
                names.iter().map(|n| u.calls(n).unwrap_or(0) as f64).collect(),
            )
        })
        .collect();
    let chart = out.join(USAGE_CHART);
    fs::write(
        &chart,
        bar_chart(
            "Primitive calls of the final evaluation policy",
            "calls",
            &names,
            &series,
        ),
    )
    .map_err(BenchError::io("cannot write", &chart))?;
    let mut t = Vec::new();
    let _ = writeln!(t, "label\tprimitive\tcalls\tunique_per_episode\tepisodes");
    for (l, u) in &usage {
        for c in &u.counts {
            let _ = writeln!(t, "{l}\t{}\t{}\t{:.4}\t{}", c.name, c.calls, u.unique_mean, u.episodes);
        }
    }
    let table = out.join(USAGE_FILE);
    fs::write(&table, t).map_err(BenchError::io("cannot write", &table))?;
    Ok((Some(chart), Some(table)))
}
