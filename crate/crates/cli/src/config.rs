//! `key=value` run configuration shared by every training command.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use a3c_core::a3c::{LockMode, OptimizerKind, TrainConfig};
use a3c_core::env::Minigame;
use a3c_core::net::Variant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

/// Whether log rows carry real elapsed times. `Auto` records them only when
/// several workers run, so single-worker logs are reproducible byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wallclock {
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    minigame: Option<Minigame>,
    pub out: Option<PathBuf>,
    pub wallclock: Wallclock,
    assigned: Vec<String>,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "minigame",
    "arch",
    "seed",
    "out",
    "resolution",
    "episode_cap",
    "workers",
    "t_max",
    "episodes",
    "learning_rate",
    "gamma",
    "epsilon_start",
    "epsilon_end",
    "epsilon_fraction",
    "entropy_beta",
    "value_coef",
    "clip_norm",
    "optimizer",
    "rmsprop_alpha",
    "rmsprop_eps",
    "lock_mode",
    "eval_every",
    "eval_episodes",
    "eval_seed",
    "threshold",
    "stop_at_threshold",
    "checkpoint_every",
    "wallclock",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn optional_f64(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    match value {
        "none" | "off" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            minigame: None,
            out: None,
            wallclock: Wallclock::Auto,
            assigned: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        let value = value.trim();
        match key {
            "minigame" => {
                let m: Minigame = parse(key, value)?;
                t.minigame = m;
                self.minigame = Some(m);
            }
            "arch" => t.variant = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "resolution" => t.env.resolution = parse(key, value)?,
            "episode_cap" => t.env.episode_cap = parse(key, value)?,
            "workers" => t.workers = parse(key, value)?,
            "t_max" => t.t_max = parse(key, value)?,
            "episodes" => t.episodes = parse(key, value)?,
            "learning_rate" => t.optimizer.learning_rate = parse(key, value)?,
            "gamma" => t.loss.gamma = parse(key, value)?,
            "epsilon_start" => t.epsilon.start = parse(key, value)?,
            "epsilon_end" => t.epsilon.end = parse(key, value)?,
            "epsilon_fraction" => t.epsilon.fraction = parse(key, value)?,
            "entropy_beta" => t.loss.entropy_beta = parse(key, value)?,
            "value_coef" => t.loss.value_coef = parse(key, value)?,
            "clip_norm" => t.loss.clip_norm = optional_f64(key, value)?,
            "optimizer" => {
                t.optimizer.kind = match value {
                    "rmsprop" => OptimizerKind::RmsProp,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(bad(key, value, "expected rmsprop or sgd")),
                }
            }
            "rmsprop_alpha" => t.optimizer.alpha = parse(key, value)?,
            "rmsprop_eps" => t.optimizer.eps = parse(key, value)?,
            "lock_mode" => {
                t.lock_mode = match value {
                    "per_tensor" => LockMode::PerTensor,
                    "strict" => LockMode::Strict,
                    _ => return Err(bad(key, value, "expected per_tensor or strict")),
                }
            }
            "eval_every" => t.eval_every = parse(key, value)?,
            "eval_episodes" => t.eval_episodes = parse(key, value)?,
            "eval_seed" => t.eval_seed = parse(key, value)?,
            "threshold" => t.threshold = optional_f64(key, value)?,
            "stop_at_threshold" => t.stop_at_threshold = parse(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "wallclock" => {
                self.wallclock = match value {
                    "auto" => Wallclock::Auto,
                    "true" | "on" => Wallclock::On,
                    "false" | "off" => Wallclock::Off,
                    _ => return Err(bad(key, value, "expected auto, true or false")),
                }
            }
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        if !self.is_set(key) {
            self.assigned.push(key.into());
        }
        Ok(())
    }

    /// Whether `key` was assigned explicitly rather than left at its default.
    pub fn is_set(&self, key: &str) -> bool {
        self.assigned.iter().any(|k| k == key)
    }

    /// Applies a `key=value` assignment such as a `--set` flag.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.into(),
        })?;
        self.set(k.trim(), v)
    }

    /// Applies a config file: `key=value` lines, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn minigame(&self) -> Result<Minigame, ConfigError> {
        self.minigame.ok_or(ConfigError::Missing("minigame"))
    }

    pub fn variant(&self) -> Variant {
        self.train.variant
    }

    /// Output directory, defaulting to `runs/<minigame>-<arch>-s<seed>`.
    pub fn out_dir(&self) -> Result<PathBuf, ConfigError> {
        match &self.out {
            Some(p) => Ok(p.clone()),
            None => Ok(PathBuf::from(format!(
                "runs/{}-{}-s{}",
                self.minigame()?,
                self.train.variant,
                self.train.seed
            ))),
        }
    }

    /// The training config with the output directory and wall-clock policy
    /// resolved.
    pub fn resolve(&self) -> Result<TrainConfig, ConfigError> {
        self.minigame()?;
        let mut t = self.train.clone();
        t.run_dir = Some(self.out_dir()?);
        t.record_wallclock = match self.wallclock {
            Wallclock::Auto => t.workers > 1,
            Wallclock::On => true,
            Wallclock::Off => false,
        };
        Ok(t)
    }

    /// Every key with its effective value; feeding it back reproduces the
    /// configuration.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let mut s = String::new();
        for key in KEYS {
            let value = match *key {
                "minigame" => self.minigame.map_or("".into(), |m| m.to_string()),
                "arch" => t.variant.to_string(),
                "seed" => t.seed.to_string(),
                "out" => self.out_dir().map(|p| p.display().to_string()).unwrap_or_default(),
                "resolution" => t.env.resolution.to_string(),
                "episode_cap" => t.env.episode_cap.to_string(),
                "workers" => t.workers.to_string(),
                "t_max" => t.t_max.to_string(),
                "episodes" => t.episodes.to_string(),
                "learning_rate" => t.optimizer.learning_rate.to_string(),
                "gamma" => t.loss.gamma.to_string(),
                "epsilon_start" => t.epsilon.start.to_string(),
                "epsilon_end" => t.epsilon.end.to_string(),
                "epsilon_fraction" => t.epsilon.fraction.to_string(),
                "entropy_beta" => t.loss.entropy_beta.to_string(),
                "value_coef" => t.loss.value_coef.to_string(),
                "clip_norm" => opt(t.loss.clip_norm),
                "optimizer" => match t.optimizer.kind {
                    OptimizerKind::RmsProp => "rmsprop".into(),
                    OptimizerKind::Sgd => "sgd".into(),
                },
                "rmsprop_alpha" => t.optimizer.alpha.to_string(),
                "rmsprop_eps" => t.optimizer.eps.to_string(),
                "lock_mode" => match t.lock_mode {
                    LockMode::PerTensor => "per_tensor".into(),
                    LockMode::Strict => "strict".into(),
                },
                "eval_every" => t.eval_every.to_string(),
                "eval_episodes" => t.eval_episodes.to_string(),
                "eval_seed" => t.eval_seed.to_string(),
                "threshold" => opt(t.threshold),
                "stop_at_threshold" => t.stop_at_threshold.to_string(),
                "checkpoint_every" => t.checkpoint_every.to_string(),
                "wallclock" => match self.wallclock {
                    Wallclock::Auto => "auto".into(),
                    Wallclock::On => "true".into(),
                    Wallclock::Off => "false".into(),
                },
                _ => unreachable!("every key is echoed"),
            };
            let _ = writeln!(s, "{key}={value}");
        }
        s
    }
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}
