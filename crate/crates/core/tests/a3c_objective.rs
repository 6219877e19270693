mod common;

use a3c_core::a3c::{accumulate_gradients, collect_rollout, compute_returns, LossConfig, Rollout};
use a3c_core::env::{Env, EnvConfig, Minigame, ObservationSpec};
use a3c_core::net::{ArchitectureSpec, Network, Variant};
use common::{objective_gradcheck, GRAD_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn single_step_gradient_matches_finite_differences() {
    let report = objective_gradcheck(Variant::Baseline, 1, 1e-3, 3);
    assert!(report.max_rel_error < GRAD_TOL, "{report:?}");
}

#[test]
fn three_step_gradient_matches_finite_differences_for_every_variant() {
    for variant in Variant::ALL {
        let report = objective_gradcheck(variant, 3, 1e-3, 21);
        assert!(report.max_rel_error < GRAD_TOL, "{variant}: {report:?}");
    }
}

fn setup(seed: u64, len: usize) -> (Network<f64>, Rollout<f64>) {
    let arch = ArchitectureSpec::new(Variant::Baseline, ObservationSpec::new(8).unwrap());
    let net = Network::<f64>::build(arch, seed);
    let mut env = Env::new(
        Minigame::Beacon,
        EnvConfig {
            resolution: 8,
            episode_cap: 120,
        },
    )
    .unwrap();
    env.reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rollout = collect_rollout(&mut env, &net, len, 0.5, &mut rng, true).unwrap();
    (net, rollout)
}

fn grads(net: &mut Network<f64>, rollout: &Rollout<f64>, loss: &LossConfig) -> Vec<f64> {
    accumulate_gradients(net, rollout, loss).unwrap();
    net.params.iter().flat_map(|p| p.tensor.grad().to_vec()).collect()
}

fn policy_only() -> LossConfig {
    LossConfig {
        gamma: 0.9,
        entropy_beta: 0.0,
        value_coef: 0.0,
        clip_norm: None,
    }
}

#[test]
fn zero_advantage_gives_zero_policy_gradient() {
    let (mut net, mut rollout) = setup(4, 1);
    // a terminal step whose reward equals the critic's estimate: R = V exactly
    rollout.terminal = true;
    rollout.bootstrap_value = 0.0;
    rollout.transitions[0].reward = rollout.transitions[0].value;
    let g = grads(&mut net, &rollout, &policy_only());
    assert!(g.iter().all(|&x| x == 0.0));

    // several steps: R_i = V_i up to rounding
    let (mut net, mut rollout) = setup(5, 4);
    let v: Vec<f64> = rollout.transitions.iter().map(|t| t.value).collect();
    let gamma = policy_only().gamma;
    rollout.terminal = false;
    rollout.bootstrap_value = 0.25;
    let mut next = rollout.bootstrap_value;
    for (t, &vi) in rollout.transitions.iter_mut().zip(&v).rev() {
        t.reward = vi - gamma * next;
        next = vi;
    }
    let returns = compute_returns(&rollout.rewards(), false, 0.25, gamma);
    for (r, vi) in returns.iter().zip(&v) {
        assert!((r - vi).abs() < 1e-12);
    }
    let g = grads(&mut net, &rollout, &policy_only());
    assert!(
        g.iter().all(|&x| x.abs() < 1e-9),
        "max {}",
        g.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    );
}

#[test]
fn doubling_the_advantage_doubles_the_policy_gradient() {
    let (mut net, mut rollout) = setup(6, 1);
    rollout.terminal = true;
    rollout.bootstrap_value = 0.0;
    let v = rollout.transitions[0].value;
    rollout.transitions[0].reward = v + 0.75;
    let once = grads(&mut net, &rollout, &policy_only());
    rollout.transitions[0].reward = v + 1.5;
    let twice = grads(&mut net, &rollout, &policy_only());
    assert!(once.iter().any(|&x| x != 0.0));
    for (a, b) in once.iter().zip(&twice) {
        assert!((2.0 * a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} {b}");
    }

    // value term alone depends only on R - V, not on the policy weighting
    let value_only = LossConfig {
        value_coef: 0.5,
        ..policy_only()
    };
    let both = grads(&mut net, &rollout, &value_only);
    let policy = grads(&mut net, &rollout, &policy_only());
    let value: Vec<f64> = both.iter().zip(&policy).map(|(b, p)| b - p).collect();
    rollout.transitions[0].reward = v + 1.5;
    let expected_value_grad_scale = 1.5;
    assert!(value.iter().any(|&x| x != 0.0));
    // d/dtheta 0.5 (R - V)^2 = -(R - V) dV: proportional to the advantage
    let value_at_075 = {
        rollout.transitions[0].reward = v + 0.75;
        let b = grads(&mut net, &rollout, &value_only);
        let p = grads(&mut net, &rollout, &policy_only());
        b.iter().zip(&p).map(|(b, p)| b - p).collect::<Vec<_>>()
    };
    for (a, b) in value_at_075.iter().zip(&value) {
        assert!((expected_value_grad_scale / 0.75 * a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn clipping_bounds_the_global_norm() {
    let (mut net, rollout) = setup(8, 6);
    let loss = LossConfig {
        clip_norm: Some(1e-3),
        ..common::full_loss(0.0)
    };
    let stats = accumulate_gradients(&mut net, &rollout, &loss).unwrap();
    assert!(stats.grad_norm > 1e-3);
    assert!((net.params.grad_norm() - 1e-3).abs() < 1e-12);
}

#[test]
fn non_finite_gradients_are_reported_with_diagnostics() {
    let (mut net, mut rollout) = setup(9, 2);
    rollout.transitions[1].reward = f64::INFINITY;
    let err = accumulate_gradients(&mut net, &rollout, &common::full_loss(0.0)).unwrap_err();
    assert!(err.to_string().contains("rewards"), "{err}");
}
