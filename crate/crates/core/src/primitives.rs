//! Parameterized action primitives.
//!
//! A primitive turns its arguments into a target robot state
//! `s* = s_args + args` (arguments scaled to meters for translational
//! components) and then servos the named components toward that target with
//! a clipped proportional controller for a fixed number of low-level steps.
//! The loop does not exit when the error reaches zero; it only stops early
//! when the episode ends.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::geom::{self, Vec3};
use crate::sim::{RawAction, RobotState, Task, WorldState, APERTURE_RATE, MAX_POS_DELTA, MAX_YAW_DELTA};

/// Proportional gain of every primitive controller.
pub const CONTROLLER_GAIN: f64 = 1.0;

/// Name of the primitive that exposes raw delta-position control.
pub const DUMMY_PRIMITIVE: &str = "go-to-pose-delta";

pub const MOTION_HORIZON: u32 = 30;
pub const GRIPPER_HORIZON: u32 = 10;

/// A robot-state component a primitive can displace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    X,
    Y,
    Z,
    Yaw,
    /// `1 - aperture`, so that positive grasp arguments close the gripper.
    Closure,
}

impl Component {
    pub fn read(self, robot: &RobotState) -> f64 {
        match self {
            Component::X => robot.pose.x,
            Component::Y => robot.pose.y,
            Component::Z => robot.pose.z,
            Component::Yaw => robot.pose.yaw,
            Component::Closure => 1.0 - robot.aperture,
        }
    }

    /// Meters (or radians, or aperture units) per unit of argument.
    fn unit(self, scale: Vec3) -> f64 {
        match self {
            Component::X => scale[0],
            Component::Y => scale[1],
            Component::Z => scale[2],
            Component::Yaw | Component::Closure => 1.0,
        }
    }

    fn error(self, target: f64, current: f64) -> f64 {
        match self {
            Component::Yaw => geom::wrap_angle(target - current),
            _ => target - current,
        }
    }
}

/// One servo phase of a primitive: which components are driven and for how
/// many low-level steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub components: Vec<Component>,
    pub horizon: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub name: String,
    /// Robot-state component displaced by each argument.
    pub args: Vec<Component>,
    /// Search space of each argument, in normalized units.
    pub arg_ranges: Vec<[f64; 2]>,
    /// Servo phases, run in order. Single-stage for all but composites.
    pub stages: Vec<Stage>,
}

impl PrimitiveSpec {
    fn single(name: &str, args: &[(Component, [f64; 2])], horizon: u32) -> Self {
        Self {
            name: name.to_string(),
            args: args.iter().map(|a| a.0).collect(),
            arg_ranges: args.iter().map(|a| a.1).collect(),
            stages: vec![Stage {
                components: args.iter().map(|a| a.0).collect(),
                horizon,
            }],
        }
    }

    fn staged(name: &str, args: &[(Component, [f64; 2])], stages: &[(&[Component], u32)]) -> Self {
        Self {
            name: name.to_string(),
            args: args.iter().map(|a| a.0).collect(),
            arg_ranges: args.iter().map(|a| a.1).collect(),
            stages: stages
                .iter()
                .map(|(c, h)| Stage {
                    components: c.to_vec(),
                    horizon: *h,
                })
                .collect(),
        }
    }

    pub fn arg_dim(&self) -> usize {
        self.args.len()
    }

    /// Total low-level step budget across all stages.
    pub fn horizon(&self) -> u32 {
        self.stages.iter().map(|s| s.horizon).sum()
    }

    pub fn uses_gripper(&self) -> bool {
        self.args.contains(&Component::Closure)
    }

    pub fn is_composite(&self) -> bool {
        self.stages.len() > 1
    }

    pub fn clip_args(&self, args: &[f64]) -> Vec<f64> {
        args.iter()
            .zip(&self.arg_ranges)
            .map(|(a, r)| geom::clamp(*a, r[0], r[1]))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.args.is_empty() || self.args.len() != self.arg_ranges.len() {
            bail!(Config, "primitive `{}`: needs one range per argument", self.name);
        }
        if self
            .arg_ranges
            .iter()
            .any(|r| r[0].partial_cmp(&r[1]) != Some(core::cmp::Ordering::Less))
        {
            bail!(
                Config,
                "primitive `{}`: argument ranges must satisfy lo < hi",
                self.name
            );
        }
        if self.stages.is_empty() || self.stages.iter().any(|s| s.horizon == 0) {
            bail!(Config, "primitive `{}`: every stage needs a horizon >= 1", self.name);
        }
        for s in &self.stages {
            if s.components.iter().any(|c| !self.args.contains(c)) {
                bail!(
                    Config,
                    "primitive `{}`: stage servos a component it has no target for",
                    self.name
                );
            }
        }
        Ok(())
    }
}

/// Target robot state of one primitive call.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub components: Vec<Component>,
    pub values: Vec<f64>,
}

impl Target {
    pub fn get(&self, c: Component) -> Option<f64> {
        self.components.iter().position(|x| *x == c).map(|i| self.values[i])
    }

    /// Euclidean norm of the error over the listed components.
    pub fn error_norm(&self, robot: &RobotState, over: &[Component]) -> f64 {
        let mut sq = 0.0;
        for (c, t) in self.components.iter().zip(&self.values) {
            if over.contains(c) {
                let e = c.error(*t, c.read(robot));
                sq += e * e;
            }
        }
        libm::sqrt(sq)
    }
}

/// `s* = s_args + args`: clip `args` into the search space, scale the
/// translational ones to meters and add them to the current values of the
/// components they displace. Yaw targets are wrapped, closure targets clamped
/// to `[0, 1]`.
pub fn compute_target(robot: &RobotState, spec: &PrimitiveSpec, args: &[f64], scale: Vec3) -> Result<Target> {
    if args.len() != spec.arg_dim() {
        bail!(
            Input,
            "primitive `{}` takes {} arguments, got {}",
            spec.name,
            spec.arg_dim(),
            args.len()
        );
    }
    if args.iter().any(|a| !a.is_finite()) {
        bail!(Input, "primitive `{}`: non-finite argument", spec.name);
    }
    let clipped = spec.clip_args(args);
    let values = spec
        .args
        .iter()
        .zip(&clipped)
        .map(|(&c, &a)| {
            let t = c.read(robot) + a * c.unit(scale);
            match c {
                Component::Yaw => geom::wrap_angle(t),
                Component::Closure => geom::clamp(t, 0.0, 1.0),
                _ => t,
            }
        })
        .collect();
    Ok(Target {
        components: spec.args.clone(),
        values,
    })
}

/// Low-level command that drives `robot` toward `target` on `servoed`
/// components; everything else is held.
pub fn control(robot: &RobotState, target: &Target, servoed: &[Component]) -> RawAction {
    let mut a = [0.0; 5];
    for (&c, &t) in target.components.iter().zip(&target.values) {
        if !servoed.contains(&c) {
            continue;
        }
        let u = CONTROLLER_GAIN * c.error(t, c.read(robot));
        match c {
            Component::X => a[0] = geom::clamp(u, -MAX_POS_DELTA, MAX_POS_DELTA),
            Component::Y => a[1] = geom::clamp(u, -MAX_POS_DELTA, MAX_POS_DELTA),
            Component::Z => a[2] = geom::clamp(u, -MAX_POS_DELTA, MAX_POS_DELTA),
            Component::Yaw => a[3] = geom::clamp(u, -MAX_YAW_DELTA, MAX_YAW_DELTA),
            // closure grows by APERTURE_RATE * grip per step
            Component::Closure => a[4] = geom::clamp(u / APERTURE_RATE, -1.0, 1.0),
        }
    }
    a
}

/// Record of one primitive execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub primitive: usize,
    /// Arguments after clipping into the search space.
    pub args: Vec<f64>,
    pub target: Target,
    pub low_level_steps: u32,
    /// `|s* - s_args|` before each low-level step, plus one final entry for
    /// the state the primitive ended in.
    pub errors: Vec<f64>,
    /// Low-level commands in the order they were applied.
    pub actions: Vec<RawAction>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub terminated_early: bool,
    pub final_robot: RobotState,
}

impl ExecutionTrace {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DofMode {
    PositionOnly,
    PositionYaw,
}

/// Ordered primitive catalog. Action indexing depends on the order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveLibrary {
    specs: Vec<PrimitiveSpec>,
}

impl PrimitiveLibrary {
    pub fn new(specs: Vec<PrimitiveSpec>) -> Result<Self> {
        if specs.is_empty() {
            bail!(Config, "primitive library is empty");
        }
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            if specs[..i].iter().any(|o| o.name == s.name) {
                bail!(Config, "duplicate primitive `{}`", s.name);
            }
        }
        Ok(Self { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&PrimitiveSpec> {
        self.specs.get(k)
    }

    pub fn specs(&self) -> &[PrimitiveSpec] {
        &self.specs
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    pub fn arg_dims(&self) -> Vec<usize> {
        self.specs.iter().map(PrimitiveSpec::arg_dim).collect()
    }

    pub fn total_arg_dim(&self) -> usize {
        self.specs.iter().map(PrimitiveSpec::arg_dim).sum()
    }

    pub fn max_horizon(&self) -> u32 {
        self.specs.iter().map(PrimitiveSpec::horizon).max().unwrap_or(0)
    }

    /// Keep only the named primitives, in library order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        for n in names {
            if self.index_of(n.as_ref()).is_none() {
                bail!(Config, "unknown primitive `{}`", n.as_ref());
            }
        }
        Self::new(
            self.specs
                .iter()
                .filter(|s| names.iter().any(|n| n.as_ref() == s.name))
                .cloned()
                .collect(),
        )
    }

    pub fn without(&self, name: &str) -> Result<Self> {
        Self::new(self.specs.iter().filter(|s| s.name != name).cloned().collect())
    }
}

/// The built-in catalog. Position-only mode holds eleven primitives; the yaw
/// mode adds a wrist twist and the composite angled forward grasp.
pub fn default_library(mode: DofMode) -> PrimitiveLibrary {
    use Component::*;
    const POS: [f64; 2] = [0.0, 1.0];
    const NEG: [f64; 2] = [-1.0, 0.0];
    const SYM: [f64; 2] = [-1.0, 1.0];
    const ANGLE: [f64; 2] = [-PI, PI];
    let mut specs = vec![
        PrimitiveSpec::single("grasp", &[(Closure, POS)], GRIPPER_HORIZON),
        PrimitiveSpec::single("release", &[(Closure, NEG)], GRIPPER_HORIZON),
        PrimitiveSpec::single("lift", &[(Z, POS)], MOTION_HORIZON),
        PrimitiveSpec::single("drop", &[(Z, NEG)], MOTION_HORIZON),
        PrimitiveSpec::single("push", &[(Y, POS)], MOTION_HORIZON),
        PrimitiveSpec::single("pull", &[(Y, NEG)], MOTION_HORIZON),
        PrimitiveSpec::single("shift-right", &[(X, POS)], MOTION_HORIZON),
        PrimitiveSpec::single("shift-left", &[(X, NEG)], MOTION_HORIZON),
        PrimitiveSpec::single(DUMMY_PRIMITIVE, &[(X, SYM), (Y, SYM), (Z, SYM)], MOTION_HORIZON),
        PrimitiveSpec::staged(
            "top-grasp",
            &[(X, SYM), (Y, SYM), (Z, NEG), (Closure, POS)],
            &[(&[X, Y], 20), (&[Z], 20), (&[Closure], 20)],
        ),
        PrimitiveSpec::staged(
            "top-z-grasp",
            &[(Z, NEG), (Closure, POS)],
            &[(&[Z], MOTION_HORIZON), (&[Closure], GRIPPER_HORIZON)],
        ),
    ];
    if mode == DofMode::PositionYaw {
        specs.push(PrimitiveSpec::single("wrist-twist", &[(Yaw, ANGLE)], MOTION_HORIZON));
        specs.push(PrimitiveSpec::staged(
            "angled-forward-grasp",
            &[(Yaw, ANGLE), (X, SYM), (Y, SYM), (Closure, POS)],
            &[(&[Yaw], 30), (&[X, Y], 30), (&[Closure], 30)],
        ));
    }
    PrimitiveLibrary::new(specs).expect("built-in library is well formed")
}

/// Run primitive `k` of `library` on `world` with `args` (clipped into the
/// search space). Rewards of every low-level step are summed so that success
/// reached mid-primitive is credited even if a later step leaves the goal.
pub fn execute(
    task: &Task,
    world: &mut WorldState,
    library: &PrimitiveLibrary,
    k: usize,
    args: &[f64],
) -> Result<ExecutionTrace> {
    let Some(spec) = library.get(k) else {
        bail!(
            Input,
            "primitive index {k} out of range (library has {})",
            library.len()
        );
    };
    let target = compute_target(&world.robot, spec, args, task.arg_scale())?;
    let mut trace = ExecutionTrace {
        primitive: k,
        args: spec.clip_args(args),
        target,
        low_level_steps: 0,
        errors: Vec::with_capacity(spec.horizon() as usize + 1),
        actions: Vec::with_capacity(spec.horizon() as usize),
        reward: 0.0,
        done: false,
        success: false,
        terminated_early: false,
        final_robot: world.robot.clone(),
    };
    'stages: for stage in &spec.stages {
        for _ in 0..stage.horizon {
            trace.errors.push(trace.target.error_norm(&world.robot, &spec.args));
            let a = control(&world.robot, &trace.target, &stage.components);
            let out = task.step(world, &a)?;
            trace.actions.push(a);
            trace.low_level_steps += 1;
            trace.reward += out.reward;
            trace.success |= out.success;
            if out.done {
                trace.done = true;
                break 'stages;
            }
        }
    }
    trace.terminated_early = trace.low_level_steps < spec.horizon();
    trace.errors.push(trace.target.error_norm(&world.robot, &spec.args));
    trace.final_robot = world.robot.clone();
    Ok(trace)
}
