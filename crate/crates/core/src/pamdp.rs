//! Hybrid discrete-continuous action interface.
//!
//! The policy emits a one-hot primitive choice together with arguments for
//! every primitive in the library; the environment picks the chosen
//! primitive's slice and runs it. Raw mode bypasses the primitives and feeds
//! a single 5-vector straight to the simulator.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::primitives::{self, ExecutionTrace, PrimitiveLibrary};
use crate::sim::{ObsMode, RawAction, Task, WorldState, RAW_ACTION_CAPS, RAW_ACTION_DIM};

/// Discount matched to a high-level horizon: `1 - 1/H`.
pub fn discount_for_horizon(horizon: u32) -> Result<f64> {
    if horizon < 1 {
        bail!(Input, "horizon must be at least 1");
    }
    Ok(1.0 - 1.0 / horizon as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridActionLayout {
    arg_dims: Vec<usize>,
    arg_offsets: Vec<usize>,
}

impl HybridActionLayout {
    pub fn new(arg_dims: Vec<usize>) -> Result<Self> {
        if arg_dims.is_empty() || arg_dims.contains(&0) {
            bail!(Config, "layout needs at least one primitive and every arg_dim >= 1");
        }
        let arg_offsets = arg_dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        Ok(Self { arg_dims, arg_offsets })
    }

    pub fn from_library(library: &PrimitiveLibrary) -> Self {
        Self::new(library.arg_dims()).expect("validated libraries have positive arg dims")
    }

    pub fn num_primitives(&self) -> usize {
        self.arg_dims.len()
    }

    pub fn arg_dims(&self) -> &[usize] {
        &self.arg_dims
    }

    pub fn arg_offsets(&self) -> &[usize] {
        &self.arg_offsets
    }

    pub fn total_arg_dim(&self) -> usize {
        self.arg_dims.iter().sum()
    }

    /// Length of the flat action vector: one-hot plus all arguments.
    pub fn total_dim(&self) -> usize {
        self.num_primitives() + self.total_arg_dim()
    }

    /// Positions of primitive `k`'s arguments inside `full_args`.
    pub fn slice(&self, k: usize) -> Range<usize> {
        self.arg_offsets[k]..self.arg_offsets[k] + self.arg_dims[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridAction {
    pub one_hot: Vec<f64>,
    pub full_args: Vec<f64>,
}

impl HybridAction {
    /// One-hot for `k`; `args_k` placed in its slice; other slices zero.
    pub fn encode(layout: &HybridActionLayout, k: usize, args_k: &[f64]) -> Result<Self> {
        if k >= layout.num_primitives() {
            bail!(Input, "primitive index {k} out of range");
        }
        if args_k.len() != layout.arg_dims[k] {
            bail!(
                Input,
                "primitive {k} takes {} args, got {}",
                layout.arg_dims[k],
                args_k.len()
            );
        }
        let mut one_hot = vec![0.0; layout.num_primitives()];
        one_hot[k] = 1.0;
        let mut full_args = vec![0.0; layout.total_arg_dim()];
        full_args[layout.slice(k)].copy_from_slice(args_k);
        Ok(Self { one_hot, full_args })
    }

    /// Index of the chosen primitive and its argument slice.
    pub fn decode<'a>(&'a self, layout: &HybridActionLayout) -> Result<(usize, &'a [f64])> {
        if self.one_hot.len() != layout.num_primitives() || self.full_args.len() != layout.total_arg_dim() {
            bail!(Input, "action shape does not match the layout");
        }
        let mut chosen = None;
        for (i, v) in self.one_hot.iter().enumerate() {
            if *v == 1.0 {
                if chosen.is_some() {
                    bail!(Input, "one-hot vector selects more than one primitive");
                }
                chosen = Some(i);
            } else if *v != 0.0 {
                bail!(Input, "one-hot vector has entry {v}");
            }
        }
        let Some(k) = chosen else {
            bail!(Input, "one-hot vector selects no primitive");
        };
        if self.full_args.iter().any(|a| !a.is_finite()) {
            bail!(Input, "non-finite argument");
        }
        Ok((k, &self.full_args[layout.slice(k)]))
    }

    /// `[one_hot, full_args]` as one vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.one_hot.clone();
        v.extend_from_slice(&self.full_args);
        v
    }
}

#[derive(Debug, Clone)]
pub enum ActionMode {
    Raps(Arc<PrimitiveLibrary>),
    Raw,
}

impl ActionMode {
    pub fn is_raw(&self) -> bool {
        matches!(self, ActionMode::Raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Chosen primitive (RAPS mode only).
    pub primitive: Option<usize>,
    pub low_level_steps: u32,
    pub success: bool,
    pub trace: Option<ExecutionTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episode-level environment over a [`Task`] in either action mode.
#[derive(Debug, Clone)]
pub struct PamdpEnv {
    task: Arc<Task>,
    mode: ActionMode,
    obs_mode: ObsMode,
    layout: HybridActionLayout,
    arg_bounds: Vec<[f64; 2]>,
    world: WorldState,
    high_level_steps: u32,
}

impl PamdpEnv {
    pub fn new(task: Arc<Task>, mode: ActionMode, obs_mode: ObsMode) -> Self {
        let (layout, arg_bounds) = match &mode {
            ActionMode::Raps(lib) => (
                HybridActionLayout::from_library(lib),
                lib.specs().iter().flat_map(|s| s.arg_ranges.iter().copied()).collect(),
            ),
            ActionMode::Raw => (
                HybridActionLayout::new(vec![RAW_ACTION_DIM]).expect("non-empty"),
                vec![[-1.0, 1.0]; RAW_ACTION_DIM],
            ),
        };
        let world = task.reset(0);
        Self {
            task,
            mode,
            obs_mode,
            layout,
            arg_bounds,
            world,
            high_level_steps: 0,
        }
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn mode(&self) -> &ActionMode {
        &self.mode
    }

    pub fn layout(&self) -> &HybridActionLayout {
        &self.layout
    }

    /// Search space of every entry of `full_args`.
    pub fn arg_bounds(&self) -> &[[f64; 2]] {
        &self.arg_bounds
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn obs_dim(&self) -> usize {
        self.task.obs_dim(self.obs_mode)
    }

    pub fn observe(&self) -> Vec<f64> {
        self.task.observe(&self.world, self.obs_mode)
    }

    /// Episode length in agent decisions.
    pub fn horizon(&self) -> u32 {
        match self.mode {
            ActionMode::Raps(_) => self.task.spec().high_level_horizon,
            ActionMode::Raw => self.task.spec().max_low_level_steps,
        }
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.world = self.task.reset(seed);
        self.high_level_steps = 0;
        self.observe()
    }

    /// Agent-level step: runs one primitive in RAPS mode, or one scaled raw
    /// command in raw mode.
    pub fn step(&mut self, action: &HybridAction) -> Result<Transition> {
        match &self.mode {
            ActionMode::Raps(_) => self.wrap_step(action),
            ActionMode::Raw => {
                let (_, args) = action.decode(&self.layout)?;
                let raw: RawAction = core::array::from_fn(|i| args[i].clamp(-1.0, 1.0) * RAW_ACTION_CAPS[i]);
                self.step_raw(&raw)
            }
        }
    }

    /// Decode, clip the chosen arguments and execute the primitive.
    pub fn wrap_step(&mut self, action: &HybridAction) -> Result<Transition> {
        let ActionMode::Raps(library) = &self.mode else {
            bail!(Input, "wrap_step requires RAPS mode");
        };
        let (k, args) = action.decode(&self.layout)?;
        let trace = primitives::execute(&self.task, &mut self.world, library, k, args)?;
        self.high_level_steps += 1;
        let done = trace.done || self.high_level_steps >= self.task.spec().high_level_horizon;
        Ok(Transition {
            obs: self.observe(),
            reward: trace.reward,
            done,
            info: StepInfo {
                primitive: Some(k),
                low_level_steps: trace.low_level_steps,
                success: self.task.is_success(&self.world),
                trace: Some(trace),
            },
        })
    }

    /// The simulator's own low-level interface.
    pub fn step_raw(&mut self, action: &RawAction) -> Result<Transition> {
        let out = self.task.step(&mut self.world, action)?;
        self.high_level_steps += 1;
        Ok(Transition {
            obs: self.observe(),
            reward: out.reward,
            done: out.done,
            info: StepInfo {
                primitive: None,
                low_level_steps: 1,
                success: out.success,
                trace: None,
            },
        })
    }
}

/// Action mode selector used by configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Raps,
    Raw,
}
