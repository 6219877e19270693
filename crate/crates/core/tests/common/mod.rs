#![allow(dead_code)]

use a3c_core::a3c::{accumulate_gradients, advantages, collect_rollout, rollout_objective, LossConfig};
use a3c_core::ckpt::{Checkpoint, Metadata, RngState};
use a3c_core::env::{Env, EnvConfig, FunctionId, Minigame, ObservationSpec};
use a3c_core::net::{build, ArchitectureSpec, Network, Variant};
use a3c_core::numcore::{gradient_check_sampled, GradCheckReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-4;

pub fn full_loss(beta: f64) -> LossConfig {
    LossConfig {
        gamma: 0.99,
        entropy_beta: beta,
        value_coef: 0.5,
        clip_norm: None,
    }
}

/// Collects a rollout of `len` steps on shards at N=8 with the 64-bit
/// network, fills the analytic gradients, and compares them against central
/// differences of the objective.
pub fn objective_gradcheck(variant: Variant, len: usize, beta: f64, seed: u64) -> GradCheckReport {
    let cfg = EnvConfig {
        resolution: 8,
        episode_cap: 120,
    };
    let arch = ArchitectureSpec::new(variant, ObservationSpec::new(8).unwrap());
    let mut net = Network::<f64>::build(arch, seed);
    let mut env = Env::new(Minigame::Shards, cfg).unwrap();
    env.reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a few warm-up steps so that units are selected and spatial actions occur
    {
        let f = FunctionId::SelectAll;
        env.step(&a3c_core::env::Action::simple(f)).unwrap();
    }
    let rollout = collect_rollout(&mut env, &net, len, 0.3, &mut rng, true).unwrap();
    assert_eq!(rollout.len(), len);
    let loss = full_loss(beta);
    accumulate_gradients(&mut net, &rollout, &loss).unwrap();
    let adv = advantages(&net, &rollout, loss.gamma).unwrap();
    let patterns = |n: &Network<f64>| -> Vec<Vec<bool>> {
        rollout
            .transitions
            .iter()
            .map(|t| n.forward(&t.observation).unwrap().1.relu_pattern())
            .collect()
    };
    let base = patterns(&net);
    let report = gradient_check_sampled(&net.params, 1e-5, 300, seed, |p| {
        let probe = Network::new(arch, p.clone()).unwrap();
        // a probe that crosses a ReLU kink has no meaningful central difference
        (patterns(&probe) == base).then(|| rollout_objective(&probe, &rollout, &loss, &adv).unwrap())
    })
    .unwrap();
    assert!(report.skipped * 50 <= report.checked, "too many kinks: {report:?}");
    report
}

/// Weights that reproduce the scripted beacon controller: select the unit
/// when nothing is selected, otherwise move onto the beacon pixel.
pub fn beacon_oracle_net(resolution: usize) -> Network<f32> {
    let arch = ArchitectureSpec::new(Variant::Baseline, ObservationSpec::new(resolution).unwrap());
    let mut net = Network::<f32>::build(arch, 0);
    for p in net.params.iter_mut() {
        p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let set = |net: &mut Network<f32>, name: &str, idx: &[usize], v: f32| {
        let t = &mut net.params.get_mut(name).unwrap().tensor;
        let shape = t.shape().to_vec();
        let flat = idx.iter().zip(&shape).fold(0, |acc, (&i, &d)| acc * d + i);
        t.data_mut()[flat] = v;
    };
    // carry the target layer to channel 0 of the screen branch (centre taps)
    set(&mut net, "screen.conv1.weight", &[0, 1, 2, 2], 1.0);
    set(&mut net, "screen.conv2.weight", &[0, 0, 1, 1], 1.0);
    set(&mut net, "spatial.conv.weight", &[0, 0, 0, 0], 1.0);
    // selected fraction -> flat unit 0 -> shared unit 0
    set(&mut net, "flat.fc.weight", &[0, 0], 1.0);
    let s = arch.branch_channels();
    set(&mut net, "shared.fc.weight", &[0, 2 * s], 1.0);
    set(&mut net, "fn.out.bias", &[FunctionId::SelectAll as usize], 0.5);
    set(&mut net, "fn.out.weight", &[FunctionId::MoveScreen as usize, 0], 10.0);
    net
}

/// Two-sided Welch t-test p-value for equal means.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let ((na, ma, va), (nb, mb, vb)) = (stats(a), stats(b));
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// A checkpoint over a random architecture with adversarial float values
/// (subnormals, negative zero, MAX) and optional optimizer statistics.
pub fn random_checkpoint(rng: &mut ChaCha8Rng) -> Checkpoint {
    let variant = Variant::ALL[rng.gen_range(0..3)];
    let obs_spec = ObservationSpec::new(rng.gen_range(8..=12)).unwrap();
    let arch = ArchitectureSpec::new(variant, obs_spec);
    let mut params = build::<f32>(&arch, rng.gen());
    for p in params.iter_mut() {
        for v in p.tensor.data_mut() {
            *v = match rng.gen_range(0..20) {
                0 => f32::from_bits(rng.gen_range(1..0x0080_0000)), // subnormal
                1 => -0.0,
                2 => f32::MAX,
                _ => rng.gen_range(-3.0..3.0),
            };
        }
    }
    let optimizer = rng.gen_bool(0.5).then(|| {
        params
            .iter()
            .map(|p| (0..p.tensor.len()).map(|_| rng.gen::<f32>()).collect())
            .collect()
    });
    let mut seeded = ChaCha8Rng::seed_from_u64(rng.gen());
    for _ in 0..rng.gen_range(0..100) {
        seeded.gen::<u32>();
    }
    Checkpoint {
        metadata: Metadata {
            variant,
            obs_spec,
            minigame: Minigame::ALL[rng.gen_range(0..3)],
            global_step: rng.gen(),
            episodes: rng.gen(),
            mean_score: rng.gen_range(-1e3..1e3),
            rng: RngState::capture(&seeded),
            source: rng
                .gen_bool(0.3)
                .then(|| format!("runs/{}/best.ckpt", rng.gen::<u16>())),
        },
        params,
        optimizer,
    }
}

pub fn bits(c: &Checkpoint) -> Vec<Vec<u32>> {
    c.params
        .iter()
        .map(|p| p.tensor.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}
