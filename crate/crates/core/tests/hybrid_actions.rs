use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raps_core::sim::RAW_ACTION_CAPS;
use raps_core::tasks::builtin_catalog;
use raps_core::{
    default_library, discount_for_horizon, ActionMode, DofMode, HybridAction, HybridActionLayout, ObsMode, PamdpEnv,
};

#[test]
fn discount_tracks_the_horizon() {
    assert_eq!(discount_for_horizon(5).unwrap(), 0.8);
    assert_eq!(discount_for_horizon(15).unwrap(), 14.0 / 15.0);
    for h in 1..200u32 {
        let g = discount_for_horizon(h).unwrap();
        assert!((g * f64::from(h) - f64::from(h - 1)).abs() < 1e-12);
    }
    assert!(matches!(discount_for_horizon(0), Err(raps_core::Error::Input(_))));
}

#[test]
fn encode_decode_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layouts = [
        HybridActionLayout::from_library(&default_library(DofMode::PositionOnly)),
        HybridActionLayout::from_library(&default_library(DofMode::PositionYaw)),
        HybridActionLayout::new(vec![3; 10]).unwrap(),
        HybridActionLayout::new(vec![5]).unwrap(),
    ];
    for n in 0..100_000 {
        let layout = &layouts[n % layouts.len()];
        let k = rng.random_range(0..layout.num_primitives());
        let args: Vec<f64> = (0..layout.arg_dims()[k])
            .map(|_| rng.random_range(-10.0..10.0))
            .collect();
        let a = HybridAction::encode(layout, k, &args).unwrap();
        assert_eq!(a.to_flat().len(), layout.total_dim());
        let (k2, args2) = a.decode(layout).unwrap();
        assert_eq!(k2, k);
        assert_eq!(args2, &args[..]);
        assert_eq!(a.one_hot.iter().sum::<f64>(), 1.0);
    }
}

#[test]
fn slices_partition_the_argument_vector() {
    for layout in [
        HybridActionLayout::from_library(&default_library(DofMode::PositionOnly)),
        HybridActionLayout::from_library(&default_library(DofMode::PositionYaw)),
        HybridActionLayout::new(vec![1, 4, 2, 1, 3]).unwrap(),
    ] {
        let mut owner = vec![None; layout.total_arg_dim()];
        for k in 0..layout.num_primitives() {
            let s = layout.slice(k);
            assert_eq!(s.len(), layout.arg_dims()[k]);
            for j in s {
                assert_eq!(owner[j], None, "index {j} in two slices");
                owner[j] = Some(k);
            }
        }
        assert!(owner.iter().all(Option::is_some));
    }
    let l = HybridActionLayout::new(vec![3; 10]).unwrap();
    assert_eq!(l.total_dim(), 40);
    assert_eq!(l.slice(0), 0..3);
    assert_eq!(l.slice(9), 27..30);
}

#[test]
fn malformed_actions_are_input_errors() {
    let layout = HybridActionLayout::new(vec![2, 1]).unwrap();
    let cases = [
        (vec![0.0, 0.0], vec![0.0; 3]),
        (vec![1.0, 1.0], vec![0.0; 3]),
        (vec![0.5, 0.5], vec![0.0; 3]),
        (vec![1.0, 0.0], vec![0.0; 2]),
        (vec![1.0, 0.0], vec![f64::NAN, 0.0, 0.0]),
    ];
    for (one_hot, full_args) in cases {
        let a = HybridAction { one_hot, full_args };
        assert!(matches!(a.decode(&layout), Err(raps_core::Error::Input(_))), "{a:?}");
    }
    assert!(HybridAction::encode(&layout, 2, &[0.0]).is_err());
    assert!(HybridAction::encode(&layout, 0, &[0.0]).is_err());
    assert!(HybridActionLayout::new(vec![]).is_err());
    assert!(HybridActionLayout::new(vec![2, 0]).is_err());
}

#[test]
fn raps_episode_accounting() {
    let cat = builtin_catalog();
    let lib = Arc::new(default_library(DofMode::PositionYaw));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for name in ["open-door", "kitchen-a"] {
        let task = Arc::new(cat[name].clone());
        let mut env = PamdpEnv::new(task.clone(), ActionMode::Raps(lib.clone()), ObsMode::State);
        for ep in 0..50 {
            env.reset(ep);
            let mut decisions = 0;
            let mut low = 0;
            let mut expected_low = 0;
            loop {
                let k = rng.random_range(0..lib.len());
                let args: Vec<f64> = lib.specs()[k]
                    .arg_ranges
                    .iter()
                    .map(|r| rng.random_range(r[0]..=r[1]))
                    .collect();
                let a = HybridAction::encode(env.layout(), k, &args).unwrap();
                let tr = env.step(&a).unwrap();
                decisions += 1;
                low += tr.info.low_level_steps;
                expected_low += lib.specs()[k].horizon();
                assert_eq!(tr.info.primitive, Some(k));
                assert_eq!(env.world().step_count, low);
                let trace = tr.info.trace.unwrap();
                if !trace.terminated_early {
                    assert_eq!(low, expected_low);
                }
                if tr.done {
                    if !trace.done {
                        assert_eq!(decisions, task.spec().high_level_horizon);
                    }
                    break;
                }
            }
            assert!(decisions <= env.horizon());
        }
    }
}

#[test]
fn raw_mode_scales_args_by_the_caps() {
    let cat = builtin_catalog();
    let task = Arc::new(cat["close-drawer"].clone());
    let mut env = PamdpEnv::new(task.clone(), ActionMode::Raw, ObsMode::State);
    assert_eq!(env.layout().num_primitives(), 1);
    assert_eq!(env.layout().total_arg_dim(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    env.reset(9);
    let mut world = task.reset(9);
    for _ in 0..200 {
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(-1.3..1.3)).collect();
        let tr = env.step(&HybridAction::encode(env.layout(), 0, &u).unwrap()).unwrap();
        let raw: [f64; 5] = core::array::from_fn(|i| u[i].clamp(-1.0, 1.0) * RAW_ACTION_CAPS[i]);
        let out = task.step(&mut world, &raw).unwrap();
        assert_eq!(env.world(), &world);
        assert_eq!((tr.reward, tr.done), (out.reward, out.done));
        assert_eq!(tr.info.low_level_steps, 1);
        if tr.done {
            break;
        }
    }
}

#[test]
fn wrap_step_is_rejected_in_raw_mode() {
    let cat = builtin_catalog();
    let mut env = PamdpEnv::new(Arc::new(cat["lift-block"].clone()), ActionMode::Raw, ObsMode::State);
    let a = HybridAction::encode(env.layout(), 0, &[0.0; 5]).unwrap();
    assert!(env.wrap_step(&a).is_err());
}
