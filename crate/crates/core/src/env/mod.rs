//! Grid minigames with a screen/minimap/flat observation model and a single
//! global function registry shared by every game.
//!
//! * `beacon`: one unit walks to a beacon; the beacon respawns on contact.
//! * `shards`: two units collect 20 shards; a fresh batch appears when the
//!   field is cleared. Splitting the units is the better strategy.
//! * `hunt`: a `2N x 2N` world seen through an `N x N` camera; ten stationary
//!   targets must be found with `move_camera` and destroyed with `attack_screen`.

mod game;
mod policies;
mod registry;

pub use game::{Env, EnvConfig, StepResult, Unit};
pub use policies::{
    convergence_threshold, episode_seed, oracle_policy, random_policy, run_episodes, BeaconOracle, Policy,
    RandomPolicy, ScoreStats, ShardsOracle, ShardsTogether, HUNT_THRESHOLD, ORACLE_FRACTION,
};
pub use registry::{registry, FunctionId, FunctionSpec, NUM_FUNCTIONS};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numcore::Tensor;

pub const SCREEN_CHANNELS: usize = 3;
pub const MINIMAP_CHANNELS: usize = 2;
pub const FLAT_DIM: usize = 2;
pub const MIN_RESOLUTION: usize = 8;
pub const MAX_RESOLUTION: usize = 64;
pub const DEFAULT_RESOLUTION: usize = 16;
pub const DEFAULT_EPISODE_CAP: usize = 120;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown minigame `{0}` (expected beacon, shards or hunt)")]
    UnknownMinigame(String),
    #[error("resolution {0} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]")]
    BadResolution(usize),
    #[error("function id {0} is not in the registry")]
    UnknownFunction(usize),
    #[error("function `{name}` {problem}")]
    MalformedArgument { name: &'static str, problem: String },
    #[error("step() called on a finished episode; call reset() first")]
    EpisodeOver,
    #[error("step() called before reset()")]
    NotReset,
    #[error("no scripted oracle exists for minigame `{0}`")]
    NoOracle(Minigame),
}

pub type Result<T, E = EnvError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Minigame {
    Beacon,
    Shards,
    Hunt,
}

impl Minigame {
    pub const ALL: [Minigame; 3] = [Minigame::Beacon, Minigame::Shards, Minigame::Hunt];

    pub fn name(self) -> &'static str {
        match self {
            Minigame::Beacon => "beacon",
            Minigame::Shards => "shards",
            Minigame::Hunt => "hunt",
        }
    }

    pub fn num_units(self) -> usize {
        match self {
            Minigame::Beacon => 1,
            Minigame::Shards | Minigame::Hunt => 2,
        }
    }
}

impl fmt::Display for Minigame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Minigame {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beacon" => Ok(Minigame::Beacon),
            "shards" => Ok(Minigame::Shards),
            "hunt" => Ok(Minigame::Hunt),
            other => Err(EnvError::UnknownMinigame(other.to_string())),
        }
    }
}

/// Observation tensor dimensions. Identical for all minigames at a given
/// resolution, so a network trained on one game can be loaded for another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObservationSpec {
    pub screen_channels: usize,
    pub minimap_channels: usize,
    pub resolution: usize,
    pub flat_dim: usize,
    pub num_functions: usize,
}

impl ObservationSpec {
    pub fn new(resolution: usize) -> Result<Self> {
        if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
            return Err(EnvError::BadResolution(resolution));
        }
        Ok(Self {
            screen_channels: SCREEN_CHANNELS,
            minimap_channels: MINIMAP_CHANNELS,
            resolution,
            flat_dim: FLAT_DIM,
            num_functions: NUM_FUNCTIONS,
        })
    }

    pub fn pixels(&self) -> usize {
        self.resolution * self.resolution
    }
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self::new(DEFAULT_RESOLUTION).expect("default resolution is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `screen_channels x N x N`: own units, targets, selected units.
    pub screen: Tensor<f32>,
    /// `minimap_channels x N x N`: camera/explored coverage, unit/target presence.
    pub minimap: Tensor<f32>,
    /// Selected fraction of own units, elapsed fraction of the episode.
    pub flat: Tensor<f32>,
    pub available: Vec<bool>,
}

/// A function identifier plus the pixel argument spatial functions require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub function_id: usize,
    /// `(x, y)` with `x` the column and `y` the row.
    pub spatial_arg: Option<(usize, usize)>,
}

impl Action {
    pub fn no_op() -> Self {
        Self::simple(FunctionId::NoOp)
    }

    pub fn simple(f: FunctionId) -> Self {
        Self {
            function_id: f as usize,
            spatial_arg: None,
        }
    }

    pub fn spatial(f: FunctionId, x: usize, y: usize) -> Self {
        Self {
            function_id: f as usize,
            spatial_arg: Some((x, y)),
        }
    }

    /// Flattened pixel index `y * N + x` of the spatial argument.
    pub fn pixel(&self, resolution: usize) -> Option<usize> {
        self.spatial_arg.map(|(x, y)| y * resolution + x)
    }
}
