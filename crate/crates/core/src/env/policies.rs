use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, Env, EnvConfig, EnvError, FunctionId, Minigame, Observation, Result};

/// Anything that picks an action from an environment state.
pub trait Policy {
    fn act(&mut self, env: &Env, obs: &Observation, rng: &mut ChaCha8Rng) -> Action;
}

/// Uniform over the available function ids; uniform pixel for spatial ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

pub fn random_policy() -> RandomPolicy {
    RandomPolicy
}

impl RandomPolicy {
    pub fn sample(available: &[bool], resolution: usize, rng: &mut ChaCha8Rng) -> Action {
        let legal: Vec<usize> = (0..available.len()).filter(|&i| available[i]).collect();
        let f = legal[rng.gen_range(0..legal.len())];
        let spatial_arg = FunctionId::from_index(f)
            .filter(|f| f.spec().spatial)
            .map(|_| (rng.gen_range(0..resolution), rng.gen_range(0..resolution)));
        Action {
            function_id: f,
            spatial_arg,
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &Env, obs: &Observation, rng: &mut ChaCha8Rng) -> Action {
        Self::sample(&obs.available, env.config().resolution, rng)
    }
}

/// Select the unit, then walk straight at the beacon.
#[derive(Debug, Clone, Copy, Default)]
pub struct BeaconOracle;

impl Policy for BeaconOracle {
    fn act(&mut self, env: &Env, _obs: &Observation, _rng: &mut ChaCha8Rng) -> Action {
        if !env.selected()[0] {
            return Action::simple(FunctionId::SelectAll);
        }
        let b = env.targets()[0];
        Action::spatial(FunctionId::MoveScreen, b.0 as usize, b.1 as usize)
    }
}

fn chebyshev(a: (i32, i32), b: (i32, i32)) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn nearest(from: (i32, i32), shards: &[(i32, i32)], exclude: Option<(i32, i32)>) -> Option<(i32, i32)> {
    shards
        .iter()
        .copied()
        .filter(|&s| Some(s) != exclude || shards.len() == 1)
        .min_by_key(|&s| {
            (
                chebyshev(from, s),
                (from.0 - s.0).abs() + (from.1 - s.1).abs(),
                s.1,
                s.0,
            )
        })
}

/// Drives the two units independently toward distinct nearest shards.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShardsOracle;

impl Policy for ShardsOracle {
    fn act(&mut self, env: &Env, _obs: &Observation, _rng: &mut ChaCha8Rng) -> Action {
        let units = env.units();
        let shards = env.targets();
        let sel = env.selected();
        let mut goal: [Option<(i32, i32)>; 2] = [0, 1].map(|i| units[i].dest.filter(|d| shards.contains(d)));
        let need = [goal[0].is_none(), goal[1].is_none()];
        for i in 0..2 {
            if goal[i].is_none() {
                goal[i] = nearest(units[i].pos, shards, goal[1 - i]);
            }
        }
        let solo = match sel {
            [true, false] => Some(0),
            [false, true] => Some(1),
            _ => None,
        };
        if let Some(i) = solo.filter(|&i| need[i]) {
            let g = goal[i].expect("shards are never empty");
            return Action::spatial(FunctionId::MoveScreen, g.0 as usize, g.1 as usize);
        }
        let select = |i: usize| {
            Action::simple(if i == 0 {
                FunctionId::SelectUnit1
            } else {
                FunctionId::SelectUnit2
            })
        };
        if let Some(i) = (0..2).find(|&i| need[i]) {
            return select(i);
        }
        // Both busy: pre-select whichever unit arrives first.
        let eta = |i: usize| goal[i].map_or(0, |g| chebyshev(units[i].pos, g));
        let next = if eta(0) <= eta(1) { 0 } else { 1 };
        if solo == Some(next) {
            Action::no_op()
        } else {
            select(next)
        }
    }
}

/// Baseline for the shards oracle: both units selected, both sent to the
/// shard nearest the first unit every step.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShardsTogether;

impl Policy for ShardsTogether {
    fn act(&mut self, env: &Env, _obs: &Observation, _rng: &mut ChaCha8Rng) -> Action {
        if !env.selected().iter().all(|&b| b) {
            return Action::simple(FunctionId::SelectAll);
        }
        let g = nearest(env.units()[0].pos, env.targets(), None).expect("shards are never empty");
        Action::spatial(FunctionId::MoveScreen, g.0 as usize, g.1 as usize)
    }
}

/// Scripted upper-bound controller for a minigame. `hunt` has none.
pub fn oracle_policy(minigame: Minigame) -> Result<Box<dyn Policy + Send>> {
    match minigame {
        Minigame::Beacon => Ok(Box::new(BeaconOracle)),
        Minigame::Shards => Ok(Box::new(ShardsOracle)),
        Minigame::Hunt => Err(EnvError::NoOracle(minigame)),
    }
}

/// Fraction of the oracle mean that counts as converged on beacon and shards.
pub const ORACLE_FRACTION: f64 = 0.8;

/// Converged score on hunt, which has no oracle to scale against.
pub const HUNT_THRESHOLD: f64 = 4.0;

/// Score at which a run counts as converged: a fraction of the simulated
/// oracle mean, or a fixed value for hunt.
pub fn convergence_threshold(minigame: Minigame, config: EnvConfig, episodes: usize, seed: u64) -> Result<f64> {
    match oracle_policy(minigame) {
        Ok(mut oracle) => Ok(ORACLE_FRACTION * run_episodes(minigame, config, oracle.as_mut(), episodes, seed)?.mean),
        Err(EnvError::NoOracle(_)) => Ok(HUNT_THRESHOLD),
        Err(e) => Err(e),
    }
}

/// Summary of per-episode scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStats {
    pub mean: f64,
    /// Sample standard deviation (zero for a single episode).
    pub std: f64,
    pub max: f64,
    pub episodes: usize,
    pub scores: Vec<f64>,
}

impl ScoreStats {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len();
        let mean = if n == 0 {
            0.0
        } else {
            scores.iter().sum::<f64>() / n as f64
        };
        let std = if n < 2 {
            0.0
        } else {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            mean,
            std,
            max: if n == 0 { 0.0 } else { max },
            episodes: n,
            scores,
        }
    }
}

/// Seed of the `index`-th evaluation episode derived from a run seed.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed
        ^ index
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Plays `episodes` full episodes and summarizes their scores. Episode `i`
/// uses environment seed `episode_seed(seed, i)`, so different policies run
/// with the same `seed` face the same start states.
pub fn run_episodes(
    minigame: Minigame,
    config: EnvConfig,
    policy: &mut dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<ScoreStats> {
    let mut env = Env::new(minigame, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut obs = env.reset(episode_seed(seed, i as u64));
        loop {
            let action = policy.act(&env, &obs, &mut rng);
            let step = env.step(&action)?;
            obs = step.observation;
            if step.done {
                scores.push(step.episode_score);
                break;
            }
        }
    }
    Ok(ScoreStats::from_scores(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_known_scores() {
        let s = ScoreStats::from_scores(vec![1.0, 2.0, 3.0, 6.0]);
        assert_eq!(s.mean, 3.0);
        assert!((s.std - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.max, 6.0);
        assert_eq!(s.episodes, 4);
    }

    #[test]
    fn hunt_has_no_oracle() {
        assert!(matches!(
            oracle_policy(Minigame::Hunt),
            Err(EnvError::NoOracle(Minigame::Hunt))
        ));
    }
}
