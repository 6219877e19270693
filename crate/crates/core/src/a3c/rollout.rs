use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{A3cError, Result};
use crate::env::{Action, Env, EnvError, FunctionId, Observation, RandomPolicy};
use crate::net::{ForwardCache, Network, NetworkOutputs};
use crate::numcore::Real;

/// One step of experience.
#[derive(Debug, Clone)]
pub struct Transition<T = f32> {
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
    /// Forward pass that produced the action, reused by the backward pass.
    pub cache: Option<Box<(NetworkOutputs<T>, ForwardCache<T>)>>,
}

/// At most `t_max` consecutive transitions of one episode.
#[derive(Debug, Clone)]
pub struct Rollout<T = f32> {
    pub transitions: Vec<Transition<T>>,
    /// `V(s_t)` of the state after the last transition, or 0 when terminal.
    pub bootstrap_value: f64,
    pub terminal: bool,
    /// Episode score, set when the rollout ends the episode.
    pub episode_score: Option<f64>,
    /// Largest total probability the policy put on unavailable function ids
    /// at any step (zero when masking works).
    pub masked_mass: f64,
}

impl<T> Rollout<T> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    /// Drops the cached forward passes, e.g. before handing the rollout to a
    /// network with different parameters.
    pub fn clear_caches(&mut self) {
        self.transitions.iter_mut().for_each(|t| t.cache = None);
    }
}

fn categorical<T: Real>(probs: &[T], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64().unwrap_or(0.0);
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return i;
        }
    }
    last.expect("distribution has positive mass")
}

/// Epsilon-greedy over the composite policy: with probability `epsilon` a
/// uniformly random available action, otherwise a sample from both heads.
pub fn sample_action<T: Real>(outputs: &NetworkOutputs<T>, epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return RandomPolicy::sample(&outputs.available, outputs.resolution, rng);
    }
    let f = categorical(&outputs.fn_probs, rng);
    let spatial_arg = FunctionId::from_index(f).filter(|f| f.spec().spatial).map(|_| {
        let p = categorical(&outputs.spatial_probs, rng);
        (p % outputs.resolution, p / outputs.resolution)
    });
    Action {
        function_id: f,
        spatial_arg,
    }
}

/// Runs the local network in `env` until the episode ends or `t_max` steps
/// have been taken. `env` must hold a live episode.
pub fn collect_rollout<T: Real>(
    env: &mut Env,
    net: &Network<T>,
    t_max: usize,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
    keep_cache: bool,
) -> Result<Rollout<T>> {
    if env.is_done() {
        return Err(A3cError::Env(EnvError::EpisodeOver));
    }
    let mut obs = env.observation();
    let mut transitions = Vec::with_capacity(t_max);
    let mut episode_score = None;
    let mut masked_mass = 0.0f64;
    while transitions.len() < t_max {
        let (outputs, cache) = net.forward(&obs)?;
        let mass: f64 = outputs
            .fn_probs
            .iter()
            .zip(&outputs.available)
            .filter(|(_, &a)| !a)
            .map(|(p, _)| p.to_f64().unwrap_or(f64::NAN))
            .sum();
        masked_mass = masked_mass.max(mass);
        let action = sample_action(&outputs, epsilon, rng);
        let log_prob = outputs.log_prob(&action)?.to_f64().unwrap_or(f64::NAN);
        let step = env.step(&action)?;
        transitions.push(Transition {
            observation: obs,
            action,
            reward: step.reward,
            log_prob,
            value: outputs.value.to_f64().unwrap_or(f64::NAN),
            entropy: outputs.entropy().to_f64().unwrap_or(f64::NAN),
            cache: keep_cache.then(|| Box::new((outputs, cache))),
        });
        obs = step.observation;
        if step.done {
            episode_score = Some(step.episode_score);
            break;
        }
    }
    let terminal = episode_score.is_some();
    let bootstrap_value = if terminal {
        0.0
    } else {
        net.forward(&obs)?.0.value.to_f64().unwrap_or(f64::NAN)
    };
    Ok(Rollout {
        transitions,
        bootstrap_value,
        terminal,
        episode_score,
        masked_mass,
    })
}
