//! Experiment configuration: a TOML file plus environment overrides.
//!
//! ```toml
//! task = "lift-block"
//! mode = "raps"              # or "raw"
//! seeds = [1, 2, 3]
//! eval_interval = 100        # gradient steps between evaluations
//! eval_episodes = 5
//! primitives = []            # subset of the library; empty keeps all
//! output_dir = "runs"
//!
//! [ablation]
//! no_dummy = false
//! yaw_enabled = false
//!
//! [budget]
//! max_training_steps = 2000
//! max_wall_clock_s = 1800.0
//! max_low_level_steps = 2000000
//!
//! [ppo]                      # any PPO field; unset fields keep the defaults
//! lr = 3e-4
//! ```
//!
//! `RAPS_OUTPUT_DIR` and `RAPS_WORKERS` override `output_dir` and `workers`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use raps_core::primitives::DUMMY_PRIMITIVE;
use raps_core::rl::{Budget, PpoConfig};
use raps_core::tasks::{builtin_catalog, extend_catalog};
use raps_core::{default_library, ActionMode, DofMode, ObsMode, PrimitiveLibrary, Task, TaskSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

pub const ENV_OUTPUT_DIR: &str = "RAPS_OUTPUT_DIR";
pub const ENV_WORKERS: &str = "RAPS_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Raps,
    Raw,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Raps => "raps",
            Mode::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub no_dummy: bool,
    pub yaw_enabled: bool,
}

/// Optional replacements for the mode's PPO defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatches: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gae_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_envs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollout_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_eps: Option<f64>,
}

impl PpoOverrides {
    pub fn apply(&self, mut c: PpoConfig) -> PpoConfig {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { c.$f = v; } )*};
        }
        set!(
            clip,
            entropy_coef,
            value_coef,
            lr,
            minibatches,
            gae_lambda,
            gamma,
            max_grad_norm,
            num_envs,
            epochs,
            rollout_len,
            hidden,
            adam_eps
        );
        c
    }
}

fn default_eval_interval() -> u64 {
    100
}

fn default_eval_episodes() -> u32 {
    5
}

fn default_obs_mode() -> ObsMode {
    ObsMode::State
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: String,
    pub mode: Mode,
    /// Run directory name; derived from task, mode and ablations when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub primitives: Vec<String>,
    #[serde(default)]
    pub ablation: Ablation,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: u32,
    #[serde(default = "default_obs_mode")]
    pub obs_mode: ObsMode,
    #[serde(default)]
    pub ppo: PpoOverrides,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Thread count for seeds and environment workers; all cores when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Extra task definitions, same schema as the built-ins. A spec with a
    /// built-in name replaces it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub custom_tasks: Vec<TaskSpec>,
}

/// Everything a run needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub task: Arc<Task>,
    pub mode: ActionMode,
    pub library: Option<Arc<PrimitiveLibrary>>,
    pub dof: DofMode,
    pub ppo: PpoConfig,
}

impl ExperimentConfig {
    pub fn new(task: &str, mode: Mode, seeds: Vec<u64>, budget: Budget) -> Self {
        Self {
            task: task.to_string(),
            mode,
            label: None,
            primitives: vec![],
            ablation: Ablation::default(),
            seeds,
            budget,
            eval_interval: default_eval_interval(),
            eval_episodes: default_eval_episodes(),
            obs_mode: default_obs_mode(),
            ppo: PpoOverrides::default(),
            output_dir: default_output_dir(),
            workers: None,
            custom_tasks: vec![],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Read a config file and apply environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(dir) = get(ENV_OUTPUT_DIR).filter(|s| !s.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        if let Some(w) = get(ENV_WORKERS).filter(|s| !s.is_empty()) {
            let n: usize = w
                .parse()
                .map_err(|_| BenchError::Config(format!("{ENV_WORKERS} must be a positive integer, got `{w}`")))?;
            self.workers = Some(n);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut l = format!("{}-{}", self.task, self.mode.as_str());
        if self.ablation.no_dummy {
            l.push_str("-no-dummy");
        }
        if self.ablation.yaw_enabled {
            l.push_str("-yaw");
        }
        l
    }

    /// Digest of everything that affects results (not where they are
    /// written or how many threads write them).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = None;
        c.label = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if self.seeds.is_empty() {
            return Err(BenchError::Config("seeds must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(BenchError::Config("seeds must be distinct".into()));
        }
        self.budget.validate()?;
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(BenchError::Config(
                "eval_interval and eval_episodes must be >= 1".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(BenchError::Config("workers must be >= 1".into()));
        }
        if let Some(l) = &self.label {
            if l.is_empty() || l.contains(['/', '\\']) || l.starts_with('.') {
                return Err(BenchError::Config(format!("label `{l}` is not a valid directory name")));
            }
        }
        let mut catalog = builtin_catalog();
        extend_catalog(&mut catalog, self.custom_tasks.clone())?;
        let task = catalog
            .remove(&self.task)
            .ok_or_else(|| BenchError::Config(format!("unknown task `{}`", self.task)))?;
        let dof = if self.ablation.yaw_enabled {
            DofMode::PositionYaw
        } else {
            DofMode::PositionOnly
        };
        let (mode, library, base) = match self.mode {
            Mode::Raw => {
                if !self.primitives.is_empty() || self.ablation != Ablation::default() {
                    return Err(BenchError::Config(
                        "primitive subsets and ablations apply to raps mode only".into(),
                    ));
                }
                (ActionMode::Raw, None, PpoConfig::raw())
            }
            Mode::Raps => {
                let mut lib = default_library(dof);
                if !self.primitives.is_empty() {
                    lib = lib.subset(&self.primitives)?;
                }
                if self.ablation.no_dummy {
                    if lib.index_of(DUMMY_PRIMITIVE).is_none() {
                        return Err(BenchError::Config(format!(
                            "no_dummy set but `{DUMMY_PRIMITIVE}` is not in the primitive subset"
                        )));
                    }
                    lib = lib.without(DUMMY_PRIMITIVE)?;
                }
                let lib = Arc::new(lib);
                let base = PpoConfig::raps(task.spec().high_level_horizon)?;
                (ActionMode::Raps(lib.clone()), Some(lib), base)
            }
        };
        let ppo = self.ppo.apply(base);
        ppo.validate()?;
        Ok(Resolved {
            task: Arc::new(task),
            mode,
            library,
            dof,
            ppo,
        })
    }
}
