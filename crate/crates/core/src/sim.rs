//! Kinematic manipulation world: a point end-effector with a yaw wrist and a
//! parallel gripper acting on prismatic, revolute and free objects.
//!
//! The world has no forces. Jointed objects move only while attached to the
//! gripper; attachment happens when the aperture closes past
//! [`GRASP_THRESHOLD`] with a handle inside that object's grasp radius, and is
//! cleared when the aperture opens back past it. Free objects can also be
//! pushed: an end-effector moving into one shoves it out to [`PUSH_RADIUS`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::geom::{self, Vec3};

/// Number of entries in a raw low-level action: `(dx, dy, dz, dyaw, grip)`.
pub const RAW_ACTION_DIM: usize = 5;
/// Per-step cap on each translational delta, meters.
pub const MAX_POS_DELTA: f64 = 0.05;
/// Per-step cap on the yaw delta, radians.
pub const MAX_YAW_DELTA: f64 = 0.1;
/// Aperture below which the gripper counts as closed.
pub const GRASP_THRESHOLD: f64 = 0.5;
/// Aperture change produced by a full grip command in one step.
pub const APERTURE_RATE: f64 = 0.2;
pub const DEFAULT_GRASP_RADIUS: f64 = 0.06;
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.3;
/// Contact distance at which a moving end-effector pushes a free object.
pub const PUSH_RADIUS: f64 = 0.04;
/// Side length of the occupancy grid appended in [`ObsMode::StateGrid`].
pub const GRID_SIZE: usize = 7;

/// Per-component caps applied to a raw action before it is integrated.
pub const RAW_ACTION_CAPS: [f64; RAW_ACTION_DIM] = [MAX_POS_DELTA, MAX_POS_DELTA, MAX_POS_DELTA, MAX_YAW_DELTA, 1.0];

pub type RawAction = [f64; RAW_ACTION_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl Pose {
    pub fn position(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    fn set_position(&mut self, p: Vec3) {
        self.x = p[0];
        self.y = p[1];
        self.z = p[2];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub pose: Pose,
    /// 1 is fully open, 0 fully closed.
    pub aperture: f64,
    /// Index of the grasped object in the task's object list.
    pub attached: Option<usize>,
}

/// Axis-aligned box bounding the end-effector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Workspace {
    pub fn clip(&self, p: Vec3) -> Vec3 {
        [
            geom::clamp(p[0], self.lo[0], self.hi[0]),
            geom::clamp(p[1], self.lo[1], self.hi[1]),
            geom::clamp(p[2], self.lo[2], self.hi[2]),
        ]
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }

    pub fn center(&self) -> Vec3 {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    pub fn half_extent(&self) -> Vec3 {
        [
            0.5 * (self.hi[0] - self.lo[0]),
            0.5 * (self.hi[1] - self.lo[1]),
            0.5 * (self.hi[2] - self.lo[2]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Joint {
    /// Handle at `anchor + axis * qpos`.
    Prismatic { anchor: Vec3, axis: Vec3, range: [f64; 2] },
    /// Handle at `hinge + R(axis, qpos) * lever`.
    Revolute {
        hinge: Vec3,
        axis: Vec3,
        lever: Vec3,
        range: [f64; 2],
    },
    /// A loose body whose position is its qpos; limited to the workspace.
    Free,
}

impl Joint {
    pub fn qpos_dim(&self) -> usize {
        match self {
            Joint::Free => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub joint: Joint,
    /// Uniform randomization range for each qpos component at reset.
    pub init: Vec<[f64; 2]>,
    #[serde(default = "default_grasp_radius")]
    pub grasp_radius: f64,
    /// Unit that qpos distances are divided by before comparing with the
    /// success threshold.
    #[serde(default = "default_qpos_scale")]
    pub qpos_scale: f64,
}

fn default_grasp_radius() -> f64 {
    DEFAULT_GRASP_RADIUS
}

fn default_qpos_scale() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    DEFAULT_SUCCESS_THRESHOLD
}

fn default_aperture() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub object: String,
    pub qpos: Vec<f64>,
}

/// Declarative description of one task. Validated into a [`Task`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub workspace: Workspace,
    pub start: Pose,
    #[serde(default = "default_aperture")]
    pub start_aperture: f64,
    pub objects: Vec<ObjectSpec>,
    pub goals: Vec<Goal>,
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    /// Goal object ids rewarded once each. Empty for single-task specs.
    #[serde(default)]
    pub subtask_order: Vec<String>,
    pub max_low_level_steps: u32,
    /// Primitive invocations per episode.
    pub high_level_horizon: u32,
    /// Meters per unit of normalized primitive argument, per axis.
    /// Defaults to half the workspace extent.
    #[serde(default)]
    pub arg_scale: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Qpos {
    Scalar(f64),
    Point(Vec3),
}

impl Qpos {
    pub fn push_to(&self, out: &mut Vec<f64>) {
        match *self {
            Qpos::Scalar(q) => out.push(q),
            Qpos::Point(p) => out.extend_from_slice(&p),
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match *self {
            Qpos::Scalar(q) => Some(q),
            Qpos::Point(_) => None,
        }
    }
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub robot: RobotState,
    /// Joint position of each object, in task declaration order.
    pub objects: Vec<Qpos>,
    pub step_count: u32,
    /// Latched completion flag per subtask (multi-task specs only).
    pub subtasks_done: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsMode {
    State,
    StateGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone)]
struct ResolvedGoal {
    object: usize,
    qpos: Qpos,
}

/// A validated, immutable task. Shareable across rollout workers.
#[derive(Debug, Clone)]
pub struct Task {
    spec: TaskSpec,
    goals: Vec<ResolvedGoal>,
    /// Indices into `goals`, one per rewarded subtask.
    subtasks: Vec<usize>,
    arg_scale: Vec3,
}

fn check_range(what: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        bail!(Config, "{what}: range [{}, {}] is not well ordered", r[0], r[1]);
    }
    Ok(())
}

fn unit_axis(id: &str, axis: Vec3) -> Result<Vec3> {
    match geom::normalize(axis) {
        Some(a) => Ok(a),
        None => bail!(Config, "object `{id}`: joint axis must be non-zero"),
    }
}

impl Task {
    pub fn new(mut spec: TaskSpec) -> Result<Self> {
        let ws = spec.workspace;
        for i in 0..3 {
            check_range("workspace", [ws.lo[i], ws.hi[i]])?;
        }
        if !ws.contains(spec.start.position()) {
            bail!(Config, "task `{}`: start pose outside the workspace", spec.name);
        }
        if !(0.0..=1.0).contains(&spec.start_aperture) {
            bail!(Config, "task `{}`: start aperture must lie in [0, 1]", spec.name);
        }
        if !(spec.success_threshold > 0.0 && spec.success_threshold.is_finite()) {
            bail!(Config, "task `{}`: success_threshold must be positive", spec.name);
        }
        if spec.max_low_level_steps == 0 || spec.high_level_horizon == 0 {
            bail!(Config, "task `{}`: step caps must be at least 1", spec.name);
        }
        for (i, obj) in spec.objects.iter().enumerate() {
            if spec.objects[..i].iter().any(|o| o.id == obj.id) {
                bail!(Config, "duplicate object id `{}`", obj.id);
            }
        }
        for obj in &mut spec.objects {
            let id = obj.id.clone();
            if !(obj.grasp_radius > 0.0 && obj.qpos_scale > 0.0) {
                bail!(Config, "object `{id}`: grasp_radius and qpos_scale must be positive");
            }
            if obj.init.len() != obj.joint.qpos_dim() {
                bail!(
                    Config,
                    "object `{id}`: expected {} init ranges, got {}",
                    obj.joint.qpos_dim(),
                    obj.init.len()
                );
            }
            for r in &obj.init {
                check_range(&id, *r)?;
            }
            match &mut obj.joint {
                Joint::Prismatic { axis, range, .. } => {
                    *axis = unit_axis(&id, *axis)?;
                    check_range(&id, *range)?;
                    let r = obj.init[0];
                    if r[0] < range[0] || r[1] > range[1] {
                        bail!(Config, "object `{id}`: init range exceeds joint limits");
                    }
                }
                Joint::Revolute { axis, lever, range, .. } => {
                    *axis = unit_axis(&id, *axis)?;
                    check_range(&id, *range)?;
                    let along = geom::dot(*lever, *axis);
                    let perp = geom::sub(*lever, geom::scale(*axis, along));
                    if geom::norm(perp) <= 1e-9 {
                        bail!(Config, "object `{id}`: lever must not be parallel to the hinge axis");
                    }
                    let r = obj.init[0];
                    if r[0] < range[0] || r[1] > range[1] {
                        bail!(Config, "object `{id}`: init range exceeds joint limits");
                    }
                }
                Joint::Free => {
                    for (i, r) in obj.init.iter().enumerate() {
                        if r[0] < ws.lo[i] || r[1] > ws.hi[i] {
                            bail!(Config, "object `{id}`: init range leaves the workspace");
                        }
                    }
                }
            }
        }
        let mut goals = Vec::with_capacity(spec.goals.len());
        for g in &spec.goals {
            let Some(object) = spec.objects.iter().position(|o| o.id == g.object) else {
                bail!(Config, "goal references unknown object `{}`", g.object);
            };
            let joint = &spec.objects[object].joint;
            let qpos = match (joint, g.qpos.as_slice()) {
                (Joint::Free, &[x, y, z]) => Qpos::Point([x, y, z]),
                (Joint::Prismatic { .. } | Joint::Revolute { .. }, &[q]) => Qpos::Scalar(q),
                _ => bail!(
                    Config,
                    "goal for `{}` has {} components, expected {}",
                    g.object,
                    g.qpos.len(),
                    joint.qpos_dim()
                ),
            };
            goals.push(ResolvedGoal { object, qpos });
        }
        if goals.is_empty() {
            bail!(Config, "task `{}` declares no goals", spec.name);
        }
        let mut subtasks = Vec::with_capacity(spec.subtask_order.len());
        for id in &spec.subtask_order {
            let Some(g) = spec.goals.iter().position(|g| &g.object == id) else {
                bail!(Config, "subtask `{id}` has no goal");
            };
            if subtasks.contains(&g) {
                bail!(Config, "subtask `{id}` listed twice");
            }
            subtasks.push(g);
        }
        let arg_scale = spec.arg_scale.unwrap_or_else(|| ws.half_extent());
        if arg_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            bail!(Config, "task `{}`: arg_scale must be positive", spec.name);
        }
        Ok(Self {
            spec,
            goals,
            subtasks,
            arg_scale,
        })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn workspace(&self) -> &Workspace {
        &self.spec.workspace
    }

    pub fn arg_scale(&self) -> Vec3 {
        self.arg_scale
    }

    pub fn is_multi_task(&self) -> bool {
        !self.subtasks.is_empty()
    }

    /// Upper bound on the episode return.
    pub fn max_return(&self) -> usize {
        if self.is_multi_task() {
            self.subtasks.len()
        } else {
            1
        }
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.spec.objects.iter().position(|o| o.id == id)
    }

    /// Initial state for `seed`: robot at the start pose, object joints drawn
    /// uniformly from their randomization ranges.
    pub fn reset(&self, seed: u64) -> WorldState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: [f64; 2]| {
            let u: f64 = rng.random();
            r[0] + (r[1] - r[0]) * u
        };
        let objects = self
            .spec
            .objects
            .iter()
            .map(|o| match o.joint {
                Joint::Free => Qpos::Point([draw(o.init[0]), draw(o.init[1]), draw(o.init[2])]),
                _ => Qpos::Scalar(draw(o.init[0])),
            })
            .collect();
        WorldState {
            robot: RobotState {
                pose: self.spec.start,
                aperture: self.spec.start_aperture,
                attached: None,
            },
            objects,
            step_count: 0,
            subtasks_done: vec![false; self.subtasks.len()],
        }
    }

    /// World position of an object's graspable point.
    pub fn handle_position(&self, world: &WorldState, object: usize) -> Vec3 {
        let spec = &self.spec.objects[object];
        match (&spec.joint, world.objects[object]) {
            (Joint::Prismatic { anchor, axis, .. }, Qpos::Scalar(q)) => geom::add(*anchor, geom::scale(*axis, q)),
            (Joint::Revolute { hinge, axis, lever, .. }, Qpos::Scalar(q)) => {
                geom::add(*hinge, geom::rotate(*lever, *axis, q))
            }
            (Joint::Free, Qpos::Point(p)) => p,
            _ => unreachable!("qpos kind always matches the joint kind"),
        }
    }

    /// Advance the world by one raw action.
    pub fn step(&self, world: &mut WorldState, action: &RawAction) -> Result<StepOutcome> {
        if action.iter().any(|a| !a.is_finite()) {
            bail!(Input, "raw action contains a non-finite entry: {:?}", action);
        }
        let clipped: RawAction =
            core::array::from_fn(|i| geom::clamp(action[i], -RAW_ACTION_CAPS[i], RAW_ACTION_CAPS[i]));

        let ws = &self.spec.workspace;
        let old = world.robot.pose.position();
        let new = ws.clip(geom::add(old, [clipped[0], clipped[1], clipped[2]]));
        world.robot.pose.set_position(new);
        world.robot.pose.yaw = geom::wrap_angle(world.robot.pose.yaw + clipped[3]);
        let disp = geom::sub(new, old);

        if let Some(idx) = world.robot.attached {
            self.drive_attached(world, idx, disp, new);
        }
        self.push_free(world, old, new, disp);

        let before = world.robot.aperture;
        let after = geom::clamp(before - APERTURE_RATE * clipped[4], 0.0, 1.0);
        world.robot.aperture = after;
        if world.robot.attached.is_none() && before >= GRASP_THRESHOLD && after < GRASP_THRESHOLD {
            if let Some(idx) = self.nearest_graspable(world, new) {
                world.robot.attached = Some(idx);
                if let Qpos::Point(_) = world.objects[idx] {
                    world.objects[idx] = Qpos::Point(new);
                }
            }
        } else if world.robot.attached.is_some() && before < GRASP_THRESHOLD && after >= GRASP_THRESHOLD {
            world.robot.attached = None;
        }

        world.step_count += 1;

        let flags = self.sparse_reward(world);
        let reward = flags.iter().filter(|f| **f).count() as f64;
        let success = if self.is_multi_task() {
            for (done, hit) in world.subtasks_done.iter_mut().zip(&flags) {
                *done |= *hit;
            }
            world.subtasks_done.iter().all(|d| *d)
        } else {
            reward > 0.0
        };
        let done = success || world.step_count >= self.spec.max_low_level_steps;
        Ok(StepOutcome { reward, done, success })
    }

    fn drive_attached(&self, world: &mut WorldState, idx: usize, disp: Vec3, ee: Vec3) {
        let spec = &self.spec.objects[idx];
        let next = match (&spec.joint, world.objects[idx]) {
            (Joint::Prismatic { axis, range, .. }, Qpos::Scalar(q)) => {
                Qpos::Scalar(geom::clamp(q + geom::dot(disp, *axis), range[0], range[1]))
            }
            (Joint::Revolute { hinge, axis, range, .. }, Qpos::Scalar(q)) => {
                let r = geom::sub(self.handle_position(world, idx), *hinge);
                let perp = geom::sub(r, geom::scale(*axis, geom::dot(r, *axis)));
                let radius = geom::norm(perp);
                let tangent = geom::scale(geom::cross(*axis, perp), 1.0 / radius);
                let dq = geom::dot(disp, tangent) / radius;
                Qpos::Scalar(geom::clamp(q + dq, range[0], range[1]))
            }
            (Joint::Free, Qpos::Point(_)) => Qpos::Point(ee),
            _ => unreachable!("qpos kind always matches the joint kind"),
        };
        world.objects[idx] = next;
    }

    fn push_free(&self, world: &mut WorldState, old: Vec3, new: Vec3, disp: Vec3) {
        let Some(u) = geom::normalize(disp) else {
            return;
        };
        let len = geom::norm(disp);
        for (i, q) in world.objects.iter_mut().enumerate() {
            let Qpos::Point(p) = *q else { continue };
            if world.robot.attached == Some(i) {
                continue;
            }
            // contact with the swept path: keep the lateral offset and rest the
            // object on the contact sphere just ahead of the end-effector
            let rel = geom::sub(p, old);
            let along = geom::dot(rel, u);
            let lateral = geom::sub(rel, geom::scale(u, along));
            let l = geom::norm(lateral);
            if along <= 0.0 || l >= PUSH_RADIUS {
                continue;
            }
            let ahead = libm::sqrt(PUSH_RADIUS * PUSH_RADIUS - l * l);
            if along - len >= ahead {
                continue;
            }
            let pushed = geom::add(geom::add(new, lateral), geom::scale(u, ahead));
            *q = Qpos::Point(self.spec.workspace.clip(pushed));
        }
    }

    /// Nearest object whose handle lies within its grasp radius of `ee`;
    /// ties go to the earlier declared object.
    fn nearest_graspable(&self, world: &WorldState, ee: Vec3) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, spec) in self.spec.objects.iter().enumerate() {
            let d = geom::dist(self.handle_position(world, i), ee);
            if d <= spec.grasp_radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Normalized distance between a goal and the current object state.
    pub fn goal_distance(&self, world: &WorldState, goal: usize) -> f64 {
        let g = &self.goals[goal];
        let scale = self.spec.objects[g.object].qpos_scale;
        let d = match (world.objects[g.object], g.qpos) {
            (Qpos::Scalar(q), Qpos::Scalar(t)) => libm::fabs(q - t),
            (Qpos::Point(p), Qpos::Point(t)) => geom::dist(p, t),
            _ => unreachable!("goal kind always matches the joint kind"),
        };
        d / scale
    }

    fn goal_met(&self, world: &WorldState, goal: usize) -> bool {
        self.goal_distance(world, goal) <= self.spec.success_threshold
    }

    /// Sparse reward flags of `world`.
    ///
    /// Single-task: one flag, set iff every goal is within the threshold.
    /// Multi-task: one flag per subtask, set iff the subtask has not been
    /// latched yet and its goal is currently met.
    pub fn sparse_reward(&self, world: &WorldState) -> Vec<bool> {
        if self.is_multi_task() {
            self.subtasks
                .iter()
                .zip(&world.subtasks_done)
                .map(|(&g, &done)| !done && self.goal_met(world, g))
                .collect()
        } else {
            vec![(0..self.goals.len()).all(|g| self.goal_met(world, g))]
        }
    }

    pub fn is_success(&self, world: &WorldState) -> bool {
        if self.is_multi_task() {
            world.subtasks_done.iter().all(|d| *d)
        } else {
            (0..self.goals.len()).all(|g| self.goal_met(world, g))
        }
    }

    pub fn obs_dim(&self, mode: ObsMode) -> usize {
        let base = 5 + self.spec.objects.iter().map(|o| o.joint.qpos_dim()).sum::<usize>();
        match mode {
            ObsMode::State => base,
            ObsMode::StateGrid => base + GRID_SIZE * GRID_SIZE,
        }
    }

    /// Flat observation: pose (4), aperture (1), object qpos in declared order,
    /// then optionally a row-major `GRID_SIZE x GRID_SIZE` top-down grid where
    /// the end-effector cell adds 1.0 and every handle cell adds 0.5.
    pub fn observe(&self, world: &WorldState, mode: ObsMode) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.obs_dim(mode));
        self.observe_into(world, mode, &mut out);
        out
    }

    pub fn observe_into(&self, world: &WorldState, mode: ObsMode, out: &mut Vec<f64>) {
        out.clear();
        let p = &world.robot.pose;
        out.extend_from_slice(&[p.x, p.y, p.z, p.yaw, world.robot.aperture]);
        for q in &world.objects {
            q.push_to(out);
        }
        if mode == ObsMode::StateGrid {
            let start = out.len();
            out.resize(start + GRID_SIZE * GRID_SIZE, 0.0);
            let cell = self.grid_cell(p.position());
            out[start + cell] += 1.0;
            for i in 0..world.objects.len() {
                let cell = self.grid_cell(self.handle_position(world, i));
                out[start + cell] += 0.5;
            }
        }
    }

    /// Row-major index of the grid cell containing `p` projected on x-y.
    pub fn grid_cell(&self, p: Vec3) -> usize {
        let ws = &self.spec.workspace;
        let bin = |v: f64, lo: f64, hi: f64| {
            let t = (v - lo) / (hi - lo);
            let b = libm::floor(t * GRID_SIZE as f64);
            geom::clamp(b, 0.0, (GRID_SIZE - 1) as f64) as usize
        };
        let col = bin(p[0], ws.lo[0], ws.hi[0]);
        let row = bin(p[1], ws.lo[1], ws.hi[1]);
        row * GRID_SIZE + col
    }
}
