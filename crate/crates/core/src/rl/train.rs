//! Rollout collection, deterministic evaluation and the PPO training loop.
//!
//! Every worker owns its environment and random stream, so collecting the
//! workers' segments in any order (or in parallel) yields the same rollout.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::pamdp::{ActionMode, PamdpEnv};
use crate::rl::buffer::{RolloutBuffer, Segment};
use crate::rl::net::{NetShape, PolicyParams};
use crate::rl::normalize::ObsNormalizer;
use crate::rl::policy::Policy;
use crate::rl::ppo::{Adam, PpoConfig, PpoUpdate, UpdateDiagnostics};
use crate::sim::{ObsMode, Task};

/// Limits on the three training clocks. Training stops at the first one hit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_training_steps: Option<u64>,
    pub max_wall_clock_s: Option<f64>,
    pub max_low_level_steps: Option<u64>,
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.max_training_steps.is_none() && self.max_wall_clock_s.is_none() && self.max_low_level_steps.is_none() {
            bail!(Config, "budget needs at least one bound");
        }
        Ok(())
    }
}

/// Source of elapsed wall-clock seconds since training started.
pub trait Clock {
    fn elapsed_s(&self) -> f64;
}

/// A clock that never advances; for environments without a timer.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn elapsed_s(&self) -> f64 {
        0.0
    }
}

/// One environment instance plus its private random stream.
#[derive(Debug, Clone)]
pub struct EnvWorker {
    env: PamdpEnv,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    episode_return: f64,
}

impl EnvWorker {
    pub fn new(mut env: PamdpEnv, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = env.reset(rng.next_u64());
        Self {
            env,
            rng,
            obs,
            episode_return: 0.0,
        }
    }

    pub fn env(&self) -> &PamdpEnv {
        &self.env
    }

    /// Run `steps` agent decisions with frozen `params` and `norm`,
    /// resetting whenever an episode ends.
    pub fn collect(&mut self, params: &PolicyParams, norm: &ObsNormalizer, steps: usize) -> Result<Segment> {
        let layout = self.env.layout().clone();
        let bounds = self.env.arg_bounds().to_vec();
        let mut policy = Policy::new(params, &layout, &bounds);
        let obs_dim = self.env.obs_dim();
        let arg_dim = layout.total_arg_dim();
        let mut seg = Segment {
            obs: Vec::with_capacity(steps * obs_dim),
            raw_obs: Vec::with_capacity(steps * obs_dim),
            unit_args: Vec::with_capacity(steps * arg_dim),
            ..Segment::default()
        };
        let mut x = Vec::with_capacity(obs_dim);
        for _ in 0..steps {
            norm.normalize_into(&self.obs, &mut x);
            let sample = policy.sample(&x, &mut self.rng)?;
            let value = policy.value(&x);
            let tr = self.env.step(&sample.action)?;
            seg.raw_obs.extend_from_slice(&self.obs);
            seg.obs.extend_from_slice(&x);
            seg.primitive.push(sample.primitive);
            seg.unit_args.extend_from_slice(&sample.unit_args);
            seg.log_prob.push(sample.log_prob);
            seg.reward.push(tr.reward);
            seg.value.push(value);
            seg.done.push(tr.done);
            seg.low_level_steps += u64::from(tr.info.low_level_steps);
            self.episode_return += tr.reward;
            if tr.done {
                seg.episode_returns.push(self.episode_return);
                seg.episode_successes.push(tr.info.success);
                self.episode_return = 0.0;
                let seed = self.rng.next_u64();
                self.obs = self.env.reset(seed);
            } else {
                self.obs = tr.obs;
            }
        }
        norm.normalize_into(&self.obs, &mut x);
        seg.bootstrap = policy.value(&x);
        Ok(seg)
    }
}

/// Strategy for running every worker's collection for one rollout.
pub trait RolloutExecutor {
    fn collect(
        &self,
        workers: &mut [EnvWorker],
        params: &PolicyParams,
        norm: &ObsNormalizer,
        steps: usize,
    ) -> Result<Vec<Segment>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialExecutor;

impl RolloutExecutor for SequentialExecutor {
    fn collect(
        &self,
        workers: &mut [EnvWorker],
        params: &PolicyParams,
        norm: &ObsNormalizer,
        steps: usize,
    ) -> Result<Vec<Segment>> {
        workers.iter_mut().map(|w| w.collect(params, norm, steps)).collect()
    }
}

/// Log of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Chosen primitive per decision (empty in raw mode).
    pub primitives: Vec<usize>,
    /// Arguments of the chosen primitive per decision (empty in raw mode).
    pub args: Vec<Vec<f64>>,
    pub low_level_steps: Vec<u32>,
    pub rewards: Vec<f64>,
    pub success: bool,
    /// The episode ended before its decision budget ran out.
    pub terminated_early: bool,
}

impl EpisodeRecord {
    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_return: f64,
    pub episodes: Vec<EpisodeRecord>,
}

/// Roll out the greedy policy for one episode per seed.
pub fn evaluate(env: &mut PamdpEnv, params: &PolicyParams, norm: &ObsNormalizer, seeds: &[u64]) -> Result<EvalResult> {
    let layout = env.layout().clone();
    let bounds = env.arg_bounds().to_vec();
    let mut policy = Policy::new(params, &layout, &bounds);
    let raw = env.mode().is_raw();
    let horizon = env.horizon() as usize;
    let mut episodes = Vec::with_capacity(seeds.len());
    let mut x = Vec::new();
    for &seed in seeds {
        let mut obs = env.reset(seed);
        let mut rec = EpisodeRecord {
            primitives: vec![],
            args: vec![],
            low_level_steps: vec![],
            rewards: vec![],
            success: false,
            terminated_early: false,
        };
        loop {
            norm.normalize_into(&obs, &mut x);
            let action = policy.deterministic(&x)?;
            let tr = env.step(&action)?;
            if !raw {
                let (k, args) = action.decode(&layout)?;
                rec.primitives.push(k);
                rec.args.push(args.to_vec());
            }
            rec.low_level_steps.push(tr.info.low_level_steps);
            rec.rewards.push(tr.reward);
            rec.success |= tr.info.success;
            obs = tr.obs;
            if tr.done {
                break;
            }
        }
        rec.terminated_early = rec.rewards.len() < horizon;
        episodes.push(rec);
    }
    let n = episodes.len().max(1) as f64;
    Ok(EvalResult {
        success_rate: episodes.iter().filter(|e| e.success).count() as f64 / n,
        mean_return: episodes.iter().map(EpisodeRecord::episode_return).sum::<f64>() / n,
        episodes,
    })
}

#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub task: Arc<Task>,
    pub mode: ActionMode,
    pub obs_mode: ObsMode,
    pub config: PpoConfig,
    pub seed: u64,
    pub budget: Budget,
    /// Gradient steps between evaluations.
    pub eval_interval: u64,
    pub eval_episodes: u32,
}

/// Learning-curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub training_steps: u64,
    pub wall_clock_s: f64,
    pub low_level_steps: u64,
    /// Agent decisions taken during training rollouts.
    pub decisions: u64,
    pub eval: EvalResult,
    pub diagnostics: UpdateDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    TrainingSteps,
    WallClock,
    LowLevelSteps,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub normalizer: ObsNormalizer,
    pub curve: Vec<CurvePoint>,
    pub stop: StopReason,
}

/// Fixed evaluation seeds of a run.
pub fn eval_seeds(seed: u64, episodes: u32) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE7A1_5EED_0000_0000);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

/// Network shape for a task and action mode.
pub fn net_shape(env: &PamdpEnv, hidden: usize) -> NetShape {
    NetShape {
        obs_dim: env.obs_dim(),
        hidden,
        num_primitives: env.layout().num_primitives(),
        arg_dim: env.layout().total_arg_dim(),
    }
}

/// Alternate rollouts and PPO updates until a budget runs out, evaluating
/// the greedy policy every `eval_interval` gradient steps. `on_point` sees
/// each curve row as soon as it exists.
pub fn train(
    setup: &TrainSetup,
    clock: &dyn Clock,
    executor: &dyn RolloutExecutor,
    on_point: &mut dyn FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    setup.budget.validate()?;
    setup.config.validate()?;
    if setup.eval_interval == 0 || setup.eval_episodes == 0 {
        bail!(Config, "eval_interval and eval_episodes must be >= 1");
    }
    let cfg = &setup.config;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let template = PamdpEnv::new(setup.task.clone(), setup.mode.clone(), setup.obs_mode);
    let arg_dims = template.layout().arg_dims().to_vec();
    let mut params = PolicyParams::init(net_shape(&template, cfg.hidden), &mut rng);
    let mut adam = Adam::new(params.len(), cfg.lr, cfg.adam_eps);
    let mut norm = ObsNormalizer::new(template.obs_dim());
    let mut workers: Vec<EnvWorker> = (0..cfg.num_envs)
        .map(|_| EnvWorker::new(template.clone(), rng.next_u64()))
        .collect();
    let mut eval_env = template.clone();
    let seeds = eval_seeds(setup.seed, setup.eval_episodes);

    let budget = setup.budget;
    let mut training_steps = 0u64;
    let mut low_level_steps = 0u64;
    let mut decisions = 0u64;
    let mut curve = Vec::new();
    let mut diag = UpdateDiagnostics::default();

    let mut point = |training_steps: u64,
                     low_level_steps: u64,
                     decisions: u64,
                     diag: &UpdateDiagnostics,
                     params: &PolicyParams,
                     norm: &ObsNormalizer,
                     curve: &mut Vec<CurvePoint>|
     -> Result<()> {
        let eval = evaluate(&mut eval_env, params, norm, &seeds)?;
        let p = CurvePoint {
            training_steps,
            wall_clock_s: clock.elapsed_s(),
            low_level_steps,
            decisions,
            eval,
            diagnostics: *diag,
        };
        on_point(&p);
        curve.push(p);
        Ok(())
    };

    let stop = 'outer: loop {
        if budget.max_low_level_steps.is_some_and(|m| low_level_steps >= m) {
            break StopReason::LowLevelSteps;
        }
        if budget.max_wall_clock_s.is_some_and(|m| clock.elapsed_s() >= m) {
            break StopReason::WallClock;
        }
        if budget.max_training_steps.is_some_and(|m| training_steps >= m) {
            break StopReason::TrainingSteps;
        }
        let segments = executor.collect(&mut workers, &params, &norm, cfg.rollout_len)?;
        let buffer = RolloutBuffer::new(template.obs_dim(), params.shape().arg_dim, segments);
        low_level_steps += buffer.low_level_steps();
        decisions += buffer.len() as u64;
        for s in &buffer.segments {
            norm.update(&s.raw_obs);
        }
        let mut update = PpoUpdate::new(&params, &buffer, &arg_dims, cfg, &mut rng);
        diag = UpdateDiagnostics::default();
        while let Some(stats) = update.step(&mut params, &mut adam, &buffer, cfg)? {
            diag.push(&stats);
            training_steps += 1;
            if training_steps.is_multiple_of(setup.eval_interval) {
                point(
                    training_steps,
                    low_level_steps,
                    decisions,
                    &diag,
                    &params,
                    &norm,
                    &mut curve,
                )?;
            }
            if budget.max_training_steps.is_some_and(|m| training_steps >= m) {
                break 'outer StopReason::TrainingSteps;
            }
            if budget.max_wall_clock_s.is_some_and(|m| clock.elapsed_s() >= m) {
                break 'outer StopReason::WallClock;
            }
        }
    };
    if curve.last().is_none_or(|p| p.training_steps != training_steps) {
        point(
            training_steps,
            low_level_steps,
            decisions,
            &diag,
            &params,
            &norm,
            &mut curve,
        )?;
    }
    Ok(TrainOutcome {
        params,
        normalizer: norm,
        curve,
        stop,
    })
}
