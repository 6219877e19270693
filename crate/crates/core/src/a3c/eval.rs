use rand_chacha::ChaCha8Rng;

use super::Result;
use crate::env::{run_episodes, Action, Env, EnvConfig, Minigame, Observation, Policy, ScoreStats};
use crate::net::{NetError, Network};
use crate::numcore::Real;

/// Mode of both heads: the most likely function id and the most likely pixel.
#[derive(Debug)]
pub struct GreedyPolicy<'a, T: Real = f32> {
    net: &'a Network<T>,
}

impl<'a, T: Real> GreedyPolicy<'a, T> {
    pub fn new(net: &'a Network<T>) -> Self {
        Self { net }
    }
}

impl<T: Real> Policy for GreedyPolicy<'_, T> {
    fn act(&mut self, _env: &Env, obs: &Observation, _rng: &mut ChaCha8Rng) -> Action {
        // the observation spec is checked against the network in `evaluate`
        let (out, _) = self.net.forward(obs).expect("observation matches network");
        out.greedy_action()
    }
}

/// Greedy evaluation over `episodes` seeded episodes. Never touches `net`.
pub fn evaluate<T: Real>(
    net: &Network<T>,
    minigame: Minigame,
    env: EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<ScoreStats> {
    let probe = Env::new(minigame, env)?;
    if probe.spec() != net.arch().obs_spec {
        return Err(NetError::ObservationMismatch(format!(
            "environment produces {:?}, network expects {:?}",
            probe.spec(),
            net.arch().obs_spec
        ))
        .into());
    }
    let mut policy = GreedyPolicy::new(net);
    Ok(run_episodes(minigame, env, &mut policy, episodes, seed)?)
}
