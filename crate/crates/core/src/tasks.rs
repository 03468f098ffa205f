//! Built-in task catalog and hand-written reference solutions.
//!
//! All tasks share one workspace, `[-0.5, 0.5] x [-0.5, 0.5] x [0, 1]`
//! meters, so a normalized primitive argument of 1 moves 0.5 m.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::geom::{self, Vec3};
use crate::primitives::{default_library, execute, DofMode};
use crate::sim::{
    Goal, Joint, ObjectSpec, Pose, RawAction, Task, TaskSpec, Workspace, WorldState, DEFAULT_GRASP_RADIUS,
    DEFAULT_SUCCESS_THRESHOLD, MAX_POS_DELTA,
};

pub const SINGLE_TASK_HORIZON: u32 = 5;
pub const SINGLE_TASK_STEP_CAP: u32 = 250;
pub const MULTI_TASK_HORIZON: u32 = 15;
pub const MULTI_TASK_STEP_CAP: u32 = 750;

pub const WORKSPACE: Workspace = Workspace {
    lo: [-0.5, -0.5, 0.0],
    hi: [0.5, 0.5, 1.0],
};

const START: Pose = Pose {
    x: 0.0,
    y: 0.0,
    z: 0.3,
    yaw: 0.0,
};

/// Name-ordered collection of validated tasks.
pub type TaskCatalog = BTreeMap<String, Task>;

fn block() -> ObjectSpec {
    ObjectSpec {
        id: "block".to_string(),
        joint: Joint::Free,
        init: vec![[-0.02, 0.02], [-0.02, 0.02], [0.25, 0.25]],
        grasp_radius: DEFAULT_GRASP_RADIUS,
        qpos_scale: 0.5,
    }
}

fn drawer() -> ObjectSpec {
    ObjectSpec {
        id: "drawer".to_string(),
        joint: Joint::Prismatic {
            anchor: [0.0, 0.45, 0.3],
            axis: [0.0, -1.0, 0.0],
            range: [0.0, 0.5],
        },
        init: vec![[0.41, 0.45]],
        grasp_radius: DEFAULT_GRASP_RADIUS,
        qpos_scale: 0.5,
    }
}

fn door() -> ObjectSpec {
    ObjectSpec {
        id: "door".to_string(),
        joint: Joint::Revolute {
            hinge: [0.25, 0.25, 0.3],
            axis: [0.0, 0.0, 1.0],
            lever: [-0.2, 0.0, 0.0],
            range: [0.0, FRAC_PI_2],
        },
        init: vec![[0.0, 0.3]],
        grasp_radius: DEFAULT_GRASP_RADIUS,
        qpos_scale: 1.0,
    }
}

fn switch() -> ObjectSpec {
    switch_at([-0.25, 0.3, 0.35])
}

/// A switch whose handle rests at `anchor` and slides up by 0.1 m.
fn switch_at(anchor: Vec3) -> ObjectSpec {
    ObjectSpec {
        id: "switch".to_string(),
        joint: Joint::Prismatic {
            anchor,
            axis: [0.0, 0.0, 1.0],
            range: [0.0, 0.1],
        },
        init: vec![[0.0, 0.0]],
        grasp_radius: DEFAULT_GRASP_RADIUS,
        qpos_scale: 0.1,
    }
}

fn kettle() -> ObjectSpec {
    kettle_at([-0.2, -0.2, 0.1])
}

fn kettle_at(p: Vec3) -> ObjectSpec {
    ObjectSpec {
        id: "kettle".to_string(),
        joint: Joint::Free,
        init: vec![[p[0], p[0]], [p[1], p[1]], [p[2], p[2]]],
        grasp_radius: DEFAULT_GRASP_RADIUS,
        qpos_scale: 0.5,
    }
}

fn cabinet() -> ObjectSpec {
    ObjectSpec {
        id: "cabinet".to_string(),
        joint: Joint::Revolute {
            hinge: [-0.3, 0.4, 0.3],
            axis: [0.0, 0.0, 1.0],
            lever: [0.35, 0.0, 0.0],
            range: [-FRAC_PI_2, 0.0],
        },
        init: vec![[0.0, 0.0]],
        grasp_radius: 0.05,
        qpos_scale: 1.0,
    }
}

fn goal(object: &str, qpos: &[f64]) -> Goal {
    Goal {
        object: object.to_string(),
        qpos: qpos.to_vec(),
    }
}

fn single(name: &str, objects: Vec<ObjectSpec>, goals: Vec<Goal>) -> TaskSpec {
    TaskSpec {
        name: name.to_string(),
        workspace: WORKSPACE,
        start: START,
        start_aperture: 1.0,
        objects,
        goals,
        success_threshold: DEFAULT_SUCCESS_THRESHOLD,
        subtask_order: vec![],
        max_low_level_steps: SINGLE_TASK_STEP_CAP,
        high_level_horizon: SINGLE_TASK_HORIZON,
        arg_scale: None,
    }
}

fn multi(name: &str, objects: Vec<ObjectSpec>, goals: Vec<Goal>) -> TaskSpec {
    let subtask_order = goals.iter().map(|g| g.object.clone()).collect();
    TaskSpec {
        subtask_order,
        max_low_level_steps: MULTI_TASK_STEP_CAP,
        high_level_horizon: MULTI_TASK_HORIZON,
        ..single(name, objects, goals)
    }
}

pub const LIFT_GOAL: [f64; 3] = [0.0, 0.0, 0.5];
pub const KETTLE_GOAL: [f64; 3] = [0.2, 0.2, 0.3];
pub const DOOR_GOAL: f64 = 1.2;
pub const CABINET_GOAL: f64 = -1.0;
/// In the kitchens the kettle sits in the path of the first subtask's
/// motion, so closing the drawer (or lifting the block) pushes it along.
pub const KITCHEN_A_KETTLE: Vec3 = [0.0, 0.2, 0.3];
pub const KITCHEN_A_KETTLE_GOAL: [f64; 3] = [0.0, 0.4, 0.3];
pub const KITCHEN_B_KETTLE: Vec3 = [0.0, 0.0, 0.45];
pub const KITCHEN_B_KETTLE_GOAL: [f64; 3] = [0.0, 0.0, 0.7];
/// Corner reached by a full lift then a full shift right from the start.
pub const KITCHEN_B_SWITCH: Vec3 = [0.5, 0.0, 0.8];

/// Specs of every built-in task, in catalog order.
pub fn builtin_specs() -> Vec<TaskSpec> {
    vec![
        single("lift-block", vec![block()], vec![goal("block", &LIFT_GOAL)]),
        single("close-drawer", vec![drawer()], vec![goal("drawer", &[0.0])]),
        single("open-door", vec![door()], vec![goal("door", &[DOOR_GOAL])]),
        single("flip-switch", vec![switch()], vec![goal("switch", &[0.1])]),
        single("place-kettle", vec![kettle()], vec![goal("kettle", &KETTLE_GOAL)]),
        single(
            "grasp-and-swing",
            vec![cabinet()],
            vec![goal("cabinet", &[CABINET_GOAL])],
        ),
        multi(
            "kitchen-a",
            vec![drawer(), switch(), door(), kettle_at(KITCHEN_A_KETTLE)],
            vec![
                goal("drawer", &[0.0]),
                goal("switch", &[0.1]),
                goal("door", &[DOOR_GOAL]),
                goal("kettle", &KITCHEN_A_KETTLE_GOAL),
            ],
        ),
        multi(
            "kitchen-b",
            vec![
                block(),
                switch_at(KITCHEN_B_SWITCH),
                cabinet(),
                kettle_at(KITCHEN_B_KETTLE),
            ],
            vec![
                goal("block", &LIFT_GOAL),
                goal("switch", &[0.1]),
                goal("cabinet", &[CABINET_GOAL]),
                goal("kettle", &KITCHEN_B_KETTLE_GOAL),
            ],
        ),
    ]
}

pub fn builtin_catalog() -> TaskCatalog {
    builtin_specs()
        .into_iter()
        .map(|s| {
            let t = Task::new(s).expect("built-in tasks are valid");
            (t.name().to_string(), t)
        })
        .collect()
}

/// Validate `specs` and merge them over `base`, replacing same-named tasks.
pub fn extend_catalog(base: &mut TaskCatalog, specs: Vec<TaskSpec>) -> Result<()> {
    for s in specs {
        let t = Task::new(s)?;
        base.insert(t.name().to_string(), t);
    }
    Ok(())
}

/// One scripted primitive call: primitive name and its arguments in
/// normalized units.
pub type ScriptStep = (&'static str, Vec<f64>);

fn to_args(delta: Vec3, scale: Vec3) -> [f64; 3] {
    [delta[0] / scale[0], delta[1] / scale[1], delta[2] / scale[2]]
}

/// Move the end-effector from `from` onto `to` with the dummy primitive,
/// split into equal hops when the offset exceeds one argument unit.
fn goto(from: Vec3, to: Vec3, scale: Vec3) -> Vec<ScriptStep> {
    let a = to_args(geom::sub(to, from), scale);
    let hops = a.iter().fold(1.0f64, |m, v| m.max(libm::ceil(libm::fabs(*v) - 1e-9)));
    let step: Vec<f64> = a.iter().map(|v| v / hops).collect();
    vec![("go-to-pose-delta", step); hops as usize]
}

/// Handle position of `id` at joint position `q`.
fn handle_at(task: &Task, world: &WorldState, id: &str, q: f64) -> Vec3 {
    let idx = task.object_index(id).expect("object exists");
    let mut w = world.clone();
    w.objects[idx] = crate::sim::Qpos::Scalar(q);
    task.handle_position(&w, idx)
}

fn goal_point(task: &Task, id: &str) -> Vec3 {
    let g = task.spec().goals.iter().find(|g| g.object == id).expect("goal exists");
    [g.qpos[0], g.qpos[1], g.qpos[2]]
}

/// Subtask objects of `task`, free objects first: the scripts carry those
/// before sweeping jointed handles, which can push free objects aside.
fn script_order(task: &Task) -> Vec<String> {
    let mut ids: Vec<String> = if task.is_multi_task() {
        task.spec().subtask_order.clone()
    } else {
        vec![task.spec().goals[0].object.clone()]
    };
    ids.sort_by_key(|id| {
        let idx = task.object_index(id).expect("object exists");
        !matches!(task.spec().objects[idx].joint, Joint::Free)
    });
    ids
}

fn handle_now(task: &Task, world: &WorldState, id: &str) -> Vec3 {
    task.handle_position(world, task.object_index(id).expect("object exists"))
}

/// Reference primitive sequence for one subtask object, starting with the
/// end-effector at `ee`. Returns the steps (ending with a release) and the
/// end-effector position they finish at.
fn object_script(task: &Task, world: &WorldState, id: &str, ee: Vec3) -> (Vec<ScriptStep>, Vec3) {
    let s = task.arg_scale();
    let idx = task.object_index(id).expect("object exists");
    let h = task.handle_position(world, idx);
    let mut steps = Vec::new();
    if geom::dist(ee, h) > task.spec().objects[idx].grasp_radius {
        steps.extend(goto(ee, h, s));
    }
    steps.push(("grasp", vec![1.0]));
    let end = match id {
        "drawer" => [h[0], h[1] + 0.4, h[2]],
        "switch" => [h[0], h[1], h[2] + 0.1],
        "block" | "kettle" => goal_point(task, id),
        // aim past the goal angle: moving along the chord under-rotates
        "door" => handle_at(task, world, id, DOOR_GOAL + 0.15),
        "cabinet" => handle_at(task, world, id, CABINET_GOAL - 0.25),
        _ => panic!("no script for object `{id}`"),
    };
    steps.extend(goto(h, end, s));
    steps.push(("release", vec![-1.0]));
    (steps, end)
}

/// Reference primitive solution for a built-in task from its initial
/// state. Single-task scripts use at most five primitives, multi-task
/// scripts fit the multi-task decision budget.
pub fn scripted_primitives(task: &Task, world: &WorldState) -> Vec<ScriptStep> {
    let ee = world.robot.pose.position();
    let s = task.arg_scale();
    match task.name() {
        "lift-block" => {
            let b = handle_now(task, world, "block");
            vec![
                ("top-z-grasp", vec![(b[2] - ee[2]) / s[2], 1.0]),
                ("lift", vec![(LIFT_GOAL[2] - b[2]) / s[2]]),
            ]
        }
        "close-drawer" => vec![("grasp", vec![1.0]), ("push", vec![0.8])],
        "flip-switch" => {
            let h = handle_now(task, world, "switch");
            let mut v = goto(ee, h, s);
            v.extend([("grasp", vec![1.0]), ("lift", vec![0.1 / s[2]])]);
            v
        }
        "place-kettle" => {
            let k = handle_now(task, world, "kettle");
            let a = to_args(geom::sub(k, ee), s);
            let mut v = vec![("top-grasp", vec![a[0], a[1], a[2], 1.0])];
            v.extend(goto(k, KETTLE_GOAL, s));
            v
        }
        _ => {
            // plan one object at a time against the simulated outcome of the
            // steps so far; subtasks finished as a side effect are skipped
            let lib = default_library(DofMode::PositionOnly);
            let mut sim = world.clone();
            let mut out = Vec::new();
            'plan: for id in &script_order(task) {
                let latched = task
                    .spec()
                    .subtask_order
                    .iter()
                    .position(|s| s == id)
                    .is_some_and(|i| sim.subtasks_done[i]);
                if latched {
                    continue;
                }
                let at = sim.robot.pose.position();
                let (steps, _) = object_script(task, &sim, id, at);
                for (name, args) in steps {
                    let k = lib.index_of(name).expect("scripted primitive exists");
                    let trace = execute(task, &mut sim, &lib, k, &args).expect("scripted arguments are valid");
                    out.push((name, args));
                    if trace.done {
                        break 'plan;
                    }
                }
            }
            if out.last().is_some_and(|(name, _)| *name == "release") {
                out.pop();
            }
            out
        }
    }
}

/// One leg of a raw-action script: move to a point, then command the
/// gripper for a number of steps.
#[derive(Debug, Clone, Copy)]
pub struct Waypoint {
    pub position: Vec3,
    pub grip: f64,
    pub grip_steps: u32,
}

/// Reference waypoints for a raw-action solution of a built-in task.
pub fn scripted_waypoints(task: &Task, world: &WorldState) -> Vec<Waypoint> {
    let mut legs = Vec::new();
    for id in &script_order(task) {
        let h = handle_now(task, world, id);
        legs.push(Waypoint {
            position: h,
            grip: 1.0,
            grip_steps: 4,
        });
        let mut via: Vec<Vec3> = match id.as_str() {
            "drawer" => vec![[h[0], h[1] + 0.4, h[2]]],
            "switch" => vec![[h[0], h[1], h[2] + 0.1]],
            "block" | "kettle" => vec![goal_point(task, id)],
            "door" => (1..=4)
                .map(|i| {
                    let q0 = world.objects[task.object_index(id).unwrap()].scalar().unwrap();
                    handle_at(task, world, id, q0 + (DOOR_GOAL + 0.1 - q0) * f64::from(i) / 4.0)
                })
                .collect(),
            "cabinet" => (1..=4)
                .map(|i| handle_at(task, world, id, (CABINET_GOAL - 0.1) * f64::from(i) / 4.0))
                .collect(),
            _ => panic!("no raw script for object `{id}`"),
        };
        let last = via.pop().expect("at least one via point");
        for p in via {
            legs.push(Waypoint {
                position: p,
                grip: 0.0,
                grip_steps: 0,
            });
        }
        legs.push(Waypoint {
            position: last,
            grip: -1.0,
            grip_steps: 4,
        });
    }
    legs
}

/// Expand waypoints into raw actions by moving at the per-step cap.
pub fn waypoint_actions(start: Vec3, legs: &[Waypoint]) -> Vec<RawAction> {
    let mut out = Vec::new();
    let mut at = start;
    for leg in legs {
        loop {
            let d = geom::sub(leg.position, at);
            if d.iter().all(|c| libm::fabs(*c) < 1e-12) {
                break;
            }
            let step = d.map(|c| c.clamp(-MAX_POS_DELTA, MAX_POS_DELTA));
            out.push([step[0], step[1], step[2], 0.0, 0.0]);
            at = geom::add(at, step);
            if d.iter().all(|c| libm::fabs(*c) <= MAX_POS_DELTA) {
                at = leg.position;
                break;
            }
        }
        for _ in 0..leg.grip_steps {
            out.push([0.0, 0.0, 0.0, 0.0, leg.grip]);
        }
    }
    out
}
