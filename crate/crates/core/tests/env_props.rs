use a3c_core::env::{
    oracle_policy, run_episodes, Action, Env, EnvConfig, FunctionId, Minigame, Policy, RandomPolicy, ShardsTogether,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn minigame() -> impl Strategy<Value = Minigame> {
    prop_oneof![Just(Minigame::Beacon), Just(Minigame::Shards), Just(Minigame::Hunt)]
}

/// A random action that may be unavailable, used to probe coercion.
fn any_action(res: usize, rng: &mut ChaCha8Rng) -> Action {
    let f = FunctionId::ALL[rng.gen_range(0..FunctionId::ALL.len())];
    if f.spec().spatial {
        Action::spatial(f, rng.gen_range(0..res), rng.gen_range(0..res))
    } else {
        Action::simple(f)
    }
}

fn chebyshev(a: (i32, i32), b: (i32, i32)) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_seed_and_actions_give_the_same_trajectory(m in minigame(), seed in any::<u64>(), res in 8usize..=20) {
        let cfg = EnvConfig { resolution: res, episode_cap: 60 };
        let trajectory = || {
            let mut env = Env::new(m, cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = vec![(env.reset(seed), 0.0)];
            while !env.is_done() {
                let step = env.step(&any_action(res, &mut rng)).unwrap();
                out.push((step.observation, step.reward));
            }
            out
        };
        prop_assert_eq!(trajectory(), trajectory());
    }

    #[test]
    fn dynamics_respect_bounds_movement_and_conservation(m in minigame(), seed in any::<u64>(), res in 8usize..=16) {
        let cfg = EnvConfig { resolution: res, episode_cap: 120 };
        let mut env = Env::new(m, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let obs = env.reset(seed);
        prop_assert!(obs.available[FunctionId::NoOp as usize]);
        let per_step = if m == Minigame::Shards { m.num_units() as f64 } else { 1.0 };
        let mut score = 0.0;
        while !env.is_done() {
            let before: Vec<(i32, i32)> = env.units().iter().map(|u| u.pos).collect();
            let step = env.step(&any_action(res, &mut rng)).unwrap();
            prop_assert!(step.reward >= 0.0 && step.reward <= per_step);
            score += step.reward;
            prop_assert_eq!(score, step.episode_score);
            prop_assert!(step.episode_score <= per_step * env.episode_step() as f64);
            for (u, b) in env.units().iter().zip(&before) {
                prop_assert!(chebyshev(u.pos, *b) <= 1);
            }
            let o = &step.observation;
            prop_assert!(o.available[FunctionId::NoOp as usize]);
            for v in o.screen.data().iter().chain(o.minimap.data()).chain(o.flat.data()) {
                prop_assert!((0.0..=1.0).contains(v));
            }
            if m == Minigame::Shards {
                prop_assert_eq!(env.collected_in_batch() + env.targets().len(), 20);
            }
            if m != Minigame::Hunt {
                prop_assert!(!o.available[FunctionId::MoveCamera as usize]);
            }
        }
        prop_assert!(env.step(&Action::no_op()).is_err());
    }

    #[test]
    fn masked_policies_never_trigger_coercion(m in minigame(), seed in any::<u64>()) {
        let cfg = EnvConfig { resolution: 12, episode_cap: 120 };
        let mut env = Env::new(m, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs = env.reset(seed);
        let mut policy = RandomPolicy;
        while !env.is_done() {
            let a = policy.act(&env, &obs, &mut rng);
            prop_assert!(obs.available[a.function_id]);
            obs = env.step(&a).unwrap().observation;
        }
        prop_assert_eq!(env.unavailable_count(), 0);
    }

    #[test]
    fn no_op_changes_nothing(m in minigame(), seed in any::<u64>()) {
        let mut env = Env::new(m, EnvConfig::default()).unwrap();
        let obs = env.reset(seed);
        let step = env.step(&Action::no_op()).unwrap();
        prop_assert_eq!(step.reward, 0.0);
        prop_assert_eq!(step.observation.screen, obs.screen);
    }
}

#[test]
fn unavailable_actions_are_counted_and_ignored() {
    let mut env = Env::new(Minigame::Beacon, EnvConfig::default()).unwrap();
    let obs = env.reset(3);
    let step = env.step(&Action::spatial(FunctionId::MoveScreen, 0, 0)).unwrap();
    assert_eq!(env.unavailable_count(), 1);
    assert_eq!(step.observation.screen, obs.screen);
    env.step(&Action::spatial(FunctionId::MoveCamera, 1, 1)).unwrap();
    assert_eq!(env.unavailable_count(), 2);
}

#[test]
fn scripted_baselines_are_ordered() {
    let cfg = EnvConfig::default();
    let beacon_oracle = run_episodes(
        Minigame::Beacon,
        cfg,
        oracle_policy(Minigame::Beacon).unwrap().as_mut(),
        300,
        1,
    )
    .unwrap();
    let beacon_random = run_episodes(Minigame::Beacon, cfg, &mut RandomPolicy, 300, 1).unwrap();
    assert!(beacon_oracle.mean > beacon_random.mean);
    let split = run_episodes(
        Minigame::Shards,
        cfg,
        oracle_policy(Minigame::Shards).unwrap().as_mut(),
        300,
        2,
    )
    .unwrap();
    let together = run_episodes(Minigame::Shards, cfg, &mut ShardsTogether, 300, 2).unwrap();
    assert!(split.mean > together.mean, "{} vs {}", split.mean, together.mean);
    assert!(oracle_policy(Minigame::Hunt).is_err());
}

#[test]
fn beacon_oracle_never_needs_coercion() {
    let mut env = Env::new(Minigame::Beacon, EnvConfig::default()).unwrap();
    let mut policy = oracle_policy(Minigame::Beacon).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..50 {
        let mut obs = env.reset(seed);
        while !env.is_done() {
            let a = policy.act(&env, &obs, &mut rng);
            assert!(obs.available[a.function_id]);
            obs = env.step(&a).unwrap().observation;
        }
        assert_eq!(env.unavailable_count(), 0);
    }
}
