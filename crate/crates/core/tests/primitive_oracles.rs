use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raps_core::primitives::{execute, Component, DUMMY_PRIMITIVE};
use raps_core::sim::{Joint, ObjectSpec, Pose, Qpos, RawAction, Workspace};
use raps_core::tasks::builtin_catalog;
use raps_core::{default_library, DofMode, Task, TaskSpec, WorldState};

fn random_args(rng: &mut ChaCha8Rng, ranges: &[[f64; 2]], overshoot: f64) -> Vec<f64> {
    ranges
        .iter()
        .map(|r| {
            let w = r[1] - r[0];
            rng.random_range(r[0] - overshoot * w..=r[1] + overshoot * w)
        })
        .collect()
}

/// Reset then wander a few random low-level steps so primitives start from
/// varied states (some with an object held).
fn random_world(task: &Task, rng: &mut ChaCha8Rng) -> WorldState {
    let mut w = task.reset(rng.random());
    let n = rng.random_range(0..40);
    for _ in 0..n {
        let a: RawAction = core::array::from_fn(|i| rng.random_range(-1.0..1.0) * if i < 3 { 0.05 } else { 1.0 });
        if task.step(&mut w, &a).unwrap().done {
            break;
        }
    }
    // some starts sit just below the step cap so the episode ends mid-primitive
    let cap = task.spec().max_low_level_steps;
    w.step_count = if rng.random_bool(0.2) {
        cap - rng.random_range(1..20)
    } else {
        0
    };
    w.subtasks_done.iter_mut().for_each(|d| *d = false);
    w
}

/// An empty world: one prismatic object parked in a corner, far from any
/// motion the tests command.
fn open_space(start: Pose) -> Task {
    Task::new(TaskSpec {
        name: "open-space".into(),
        workspace: Workspace {
            lo: [-0.5, -0.5, 0.0],
            hi: [0.5, 0.5, 1.0],
        },
        start,
        start_aperture: 1.0,
        objects: vec![ObjectSpec {
            id: "far".into(),
            joint: Joint::Prismatic {
                anchor: [0.5, 0.5, 0.0],
                axis: [0.0, 0.0, 1.0],
                range: [0.0, 0.01],
            },
            init: vec![[0.0, 0.0]],
            grasp_radius: 0.001,
            qpos_scale: 1.0,
        }],
        goals: vec![raps_core::sim::Goal {
            object: "far".into(),
            qpos: vec![10.0],
        }],
        success_threshold: 0.3,
        subtask_order: vec![],
        max_low_level_steps: 10_000,
        high_level_horizon: 5,
        arg_scale: None,
    })
    .unwrap()
}

#[test]
fn execute_matches_replay_through_the_simulator() {
    let cat = builtin_catalog();
    let tasks: Vec<&Task> = cat.values().collect();
    let lib = default_library(DofMode::PositionYaw);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut early = 0;
    for _ in 0..1000 {
        let task = tasks[rng.random_range(0..tasks.len())];
        let start = random_world(task, &mut rng);
        let k = rng.random_range(0..lib.len());
        let args = random_args(&mut rng, &lib.specs()[k].arg_ranges, 0.3);

        let mut via_execute = start.clone();
        let trace = execute(task, &mut via_execute, &lib, k, &args).unwrap();

        let mut replay = start.clone();
        let mut reward = 0.0;
        for a in &trace.actions {
            reward += task.step(&mut replay, a).unwrap().reward;
        }
        assert_eq!(replay, via_execute);
        assert_eq!(reward, trace.reward);
        assert_eq!(trace.low_level_steps as usize, trace.actions.len());
        assert_eq!(trace.errors.len(), trace.actions.len() + 1);
        assert_eq!(trace.final_robot, via_execute.robot);
        if trace.terminated_early {
            early += 1;
            assert!(trace.done);
        } else {
            assert_eq!(trace.low_level_steps, lib.specs()[k].horizon());
        }
    }
    assert!(early > 0, "no sample hit an episode end mid-primitive");
}

#[test]
fn single_stage_commands_are_clipped_proportional_errors() {
    let cat = builtin_catalog();
    let task = &cat["close-drawer"];
    let lib = default_library(DofMode::PositionYaw);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in [
        "lift",
        "drop",
        "push",
        "pull",
        "shift-right",
        "shift-left",
        DUMMY_PRIMITIVE,
    ] {
        let k = lib.index_of(name).unwrap();
        for _ in 0..50 {
            let mut w = random_world(task, &mut rng);
            let args = random_args(&mut rng, &lib.specs()[k].arg_ranges, 0.0);
            let p0 = w.robot.pose.position();
            let trace = execute(task, &mut w, &lib, k, &args).unwrap();
            // target by hand: start position plus args in meters on the named axes
            let mut target = p0;
            for (c, a) in lib.specs()[k].args.iter().zip(&args) {
                let i = axis(*c).unwrap();
                target[i] += a * task.arg_scale()[i];
            }
            let mut p = p0;
            for a in &trace.actions {
                for i in 0..3 {
                    let servoed = lib.specs()[k].args.iter().any(|c| axis(*c) == Some(i));
                    let want = if servoed {
                        (target[i] - p[i]).clamp(-0.05, 0.05)
                    } else {
                        0.0
                    };
                    assert_eq!(a[i], want, "{name} axis {i}");
                }
                assert_eq!((a[3], a[4]), (0.0, 0.0));
                p = task.workspace().clip([p[0] + a[0], p[1] + a[1], p[2] + a[2]]);
            }
            assert_eq!(p, w.robot.pose.position());
        }
    }
}

fn axis(c: Component) -> Option<usize> {
    match c {
        Component::X => Some(0),
        Component::Y => Some(1),
        Component::Z => Some(2),
        _ => None,
    }
}

#[test]
fn dummy_primitive_converges_monotonically() {
    let lib = default_library(DofMode::PositionOnly);
    let k = lib.index_of(DUMMY_PRIMITIVE).unwrap();
    let horizon = lib.specs()[k].horizon() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut done = 0;
    while done < 1000 {
        let start = Pose {
            x: rng.random_range(-0.45..0.45),
            y: rng.random_range(-0.45..0.45),
            z: rng.random_range(0.05..0.95),
            yaw: 0.0,
        };
        let task = open_space(start);
        let args: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let scale = task.arg_scale();
        let p = start.position();
        let target: Vec<f64> = (0..3).map(|i| p[i] + args[i] * scale[i]).collect();
        if !task.workspace().contains([target[0], target[1], target[2]]) {
            continue;
        }
        let mut w = task.reset(0);
        let trace = execute(&task, &mut w, &lib, k, &args).unwrap();
        assert_eq!(trace.actions.len(), horizon);
        assert!(
            trace.final_error() <= 0.005,
            "error {} for {args:?}",
            trace.final_error()
        );
        for pair in trace.errors.windows(2) {
            assert!(pair[1] <= pair[0], "error rose: {:?}", trace.errors);
            assert!(pair[1] < pair[0] || pair[0] == 0.0, "stalled: {:?}", trace.errors);
        }
        done += 1;
    }
}

#[test]
fn trajectories_ignore_objects_out_of_reach() {
    let lib = default_library(DofMode::PositionYaw);
    let cat = builtin_catalog();
    let tasks: Vec<&Task> = cat.values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut pairs = 0;
    while pairs < 500 {
        let task = tasks[rng.random_range(0..tasks.len())];
        let mut a = task.reset(rng.random());
        let mut b = task.reset(rng.random());
        let pose = Pose {
            x: rng.random_range(-0.5..0.5),
            y: rng.random_range(-0.5..0.5),
            z: rng.random_range(0.0..1.0),
            yaw: rng.random_range(-3.0..3.0),
        };
        a.robot.pose = pose;
        b.robot.pose = pose;
        if a.objects == b.objects {
            continue;
        }
        let k = rng.random_range(0..lib.len());
        let args = random_args(&mut rng, &lib.specs()[k].arg_ranges, 0.0);
        let ta = execute(task, &mut a, &lib, k, &args).unwrap();
        let tb = execute(task, &mut b, &lib, k, &args).unwrap();
        if ta.done || tb.done || a.robot.attached.is_some() || b.robot.attached.is_some() {
            continue;
        }
        // attachment may have come and gone mid-primitive; replay to be sure
        if held_at_any_step(task, &ta.actions, pose) || held_at_any_step(task, &tb.actions, pose) {
            continue;
        }
        assert_eq!(ta.actions, tb.actions);
        assert_eq!(ta.final_robot, tb.final_robot);
        pairs += 1;
    }
}

fn held_at_any_step(task: &Task, actions: &[RawAction], pose: Pose) -> bool {
    let mut w = task.reset(0);
    w.robot.pose = pose;
    actions.iter().any(|act| {
        task.step(&mut w, act).unwrap();
        w.robot.attached.is_some()
    })
}

#[test]
fn out_of_range_args_act_like_clipped_args() {
    let cat = builtin_catalog();
    let task = &cat["kitchen-b"];
    let lib = default_library(DofMode::PositionYaw);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let start = random_world(task, &mut rng);
        let k = rng.random_range(0..lib.len());
        let spec = &lib.specs()[k];
        let wild = random_args(&mut rng, &spec.arg_ranges, 2.0);
        let (mut a, mut b) = (start.clone(), start);
        let ta = execute(task, &mut a, &lib, k, &wild).unwrap();
        let tb = execute(task, &mut b, &lib, k, &spec.clip_args(&wild)).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);
    }
}

#[test]
fn wrong_arity_and_bad_index_are_input_errors() {
    let cat = builtin_catalog();
    let task = &cat["lift-block"];
    let lib = default_library(DofMode::PositionOnly);
    let mut w = task.reset(0);
    let lift = lib.index_of("lift").unwrap();
    assert!(matches!(
        execute(task, &mut w, &lib, lift, &[0.1, 0.2]),
        Err(raps_core::Error::Input(_))
    ));
    assert!(matches!(
        execute(task, &mut w, &lib, 99, &[0.1]),
        Err(raps_core::Error::Input(_))
    ));
    assert!(matches!(
        execute(task, &mut w, &lib, lift, &[f64::NAN]),
        Err(raps_core::Error::Input(_))
    ));
    assert_eq!(w, task.reset(0));
}

#[test]
fn grasp_then_lift_carries_the_block() {
    let cat = builtin_catalog();
    let task = &cat["lift-block"];
    let lib = default_library(DofMode::PositionOnly);
    let mut w = task.reset(5);
    execute(task, &mut w, &lib, lib.index_of("grasp").unwrap(), &[1.0]).unwrap();
    assert_eq!(w.robot.attached, Some(0));
    let trace = execute(task, &mut w, &lib, lib.index_of("lift").unwrap(), &[0.4]).unwrap();
    assert_eq!(trace.reward, 1.0);
    assert!(trace.success && trace.done);
    assert_eq!(w.objects[0], Qpos::Point(w.robot.pose.position()));
}
