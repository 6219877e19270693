use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Action, EnvError, FunctionId, Minigame, Observation, ObservationSpec, Result, DEFAULT_EPISODE_CAP,
    DEFAULT_RESOLUTION,
};
use crate::numcore::Tensor;

const SHARD_BATCH: usize = 20;
const HUNT_TARGETS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvConfig {
    pub resolution: usize,
    pub episode_cap: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            episode_cap: DEFAULT_EPISODE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub episode_score: f64,
}

/// A controllable unit, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unit {
    pub pos: (i32, i32),
    pub dest: Option<(i32, i32)>,
}

impl Unit {
    /// One cell of Chebyshev movement toward the destination.
    fn advance(&mut self) {
        if let Some(d) = self.dest {
            self.pos.0 += (d.0 - self.pos.0).signum();
            self.pos.1 += (d.1 - self.pos.1).signum();
            if self.pos == d {
                self.dest = None;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct State {
    units: Vec<Unit>,
    selected: Vec<bool>,
    /// Beacon position, remaining shards, or live hunt targets.
    targets: Vec<(i32, i32)>,
    /// Hunt only: which live targets have been inside the camera window.
    seen: Vec<bool>,
    /// Hunt only: world cells that have been inside the camera window.
    explored: Vec<bool>,
    camera: (i32, i32),
    collected_in_batch: usize,
    step: usize,
    score: f64,
    done: bool,
}

/// One minigame instance. Single-threaded; each worker owns its own.
#[derive(Debug, Clone)]
pub struct Env {
    minigame: Minigame,
    config: EnvConfig,
    spec: ObservationSpec,
    rng: ChaCha8Rng,
    state: Option<State>,
    unavailable_count: u64,
}

impl Env {
    pub fn new(minigame: Minigame, config: EnvConfig) -> Result<Self> {
        let spec = ObservationSpec::new(config.resolution)?;
        Ok(Self {
            minigame,
            config,
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: None,
            unavailable_count: 0,
        })
    }

    pub fn minigame(&self) -> Minigame {
        self.minigame
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    pub fn spec(&self) -> ObservationSpec {
        self.spec
    }

    fn n(&self) -> i32 {
        self.config.resolution as i32
    }

    /// Side length of the world grid.
    pub fn world_size(&self) -> usize {
        match self.minigame {
            Minigame::Hunt => 2 * self.config.resolution,
            _ => self.config.resolution,
        }
    }

    /// Actions issued while unavailable and coerced to `no_op`.
    pub fn unavailable_count(&self) -> u64 {
        self.unavailable_count
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let world = self.world_size() as i32;
        let state = match self.minigame {
            Minigame::Beacon => {
                let cells = sample(&mut self.rng, (n * n) as usize, 2);
                let unit = cell(cells.index(0), n);
                let beacon = cell(cells.index(1), n);
                State::new(vec![unit], vec![beacon], (0, 0))
            }
            Minigame::Shards => {
                let cells = sample(&mut self.rng, (n * n) as usize, 2 + SHARD_BATCH);
                let units = (0..2).map(|i| cell(cells.index(i), n)).collect();
                let shards = (2..2 + SHARD_BATCH).map(|i| cell(cells.index(i), n)).collect();
                State::new(units, shards, (0, 0))
            }
            Minigame::Hunt => {
                // Units start in the central N/2 block; the camera is centered on it.
                let half = n / 2;
                let lo = world / 2 - half / 2;
                let picks = sample(&mut self.rng, (half * half) as usize, 2);
                let units = (0..2)
                    .map(|i| {
                        let (x, y) = cell(picks.index(i), half);
                        (lo + x, lo + y)
                    })
                    .collect();
                let camera = (world / 2 - half, world / 2 - half);
                // Targets are placed outside the initial camera window.
                let outside: Vec<(i32, i32)> = (0..world * world)
                    .map(|i| cell(i as usize, world))
                    .filter(|&(x, y)| !(x >= camera.0 && x < camera.0 + n && y >= camera.1 && y < camera.1 + n))
                    .collect();
                let targets = sample(&mut self.rng, outside.len(), HUNT_TARGETS)
                    .into_iter()
                    .map(|i| outside[i])
                    .collect();
                let mut s = State::new(units, targets, camera);
                s.explored = vec![false; (world * world) as usize];
                s.seen = vec![false; HUNT_TARGETS];
                s
            }
        };
        self.state = Some(state);
        self.update_visibility();
        self.observation()
    }

    fn state(&self) -> &State {
        self.state.as_ref().expect("env used before reset()")
    }

    pub fn units(&self) -> &[Unit] {
        &self.state().units
    }

    pub fn selected(&self) -> &[bool] {
        &self.state().selected
    }

    pub fn targets(&self) -> &[(i32, i32)] {
        &self.state().targets
    }

    /// Top-left world cell of the camera window.
    pub fn camera(&self) -> (i32, i32) {
        self.state().camera
    }

    pub fn episode_step(&self) -> usize {
        self.state().step
    }

    pub fn episode_score(&self) -> f64 {
        self.state().score
    }

    pub fn is_done(&self) -> bool {
        self.state.as_ref().is_none_or(|s| s.done)
    }

    /// Shards collected from the current batch. Always `20 - targets().len()`
    /// in the shards game.
    pub fn collected_in_batch(&self) -> usize {
        self.state().collected_in_batch
    }

    /// Fraction of world cells that have been inside the camera window (hunt).
    pub fn explored_fraction(&self) -> f64 {
        let s = self.state();
        if s.explored.is_empty() {
            return 1.0;
        }
        s.explored.iter().filter(|&&e| e).count() as f64 / s.explored.len() as f64
    }

    pub fn available_actions(&self) -> Vec<bool> {
        let any_selected = self.state.as_ref().is_some_and(|s| s.selected.iter().any(|&b| b));
        FunctionId::ALL
            .iter()
            .map(|f| match f {
                FunctionId::NoOp | FunctionId::SelectAll | FunctionId::SelectUnit1 | FunctionId::SelectUnit2 => true,
                FunctionId::MoveScreen | FunctionId::AttackScreen => any_selected,
                FunctionId::MoveCamera => self.minigame == Minigame::Hunt,
            })
            .collect()
    }

    fn validate(&self, action: &Action) -> Result<FunctionId> {
        let f = FunctionId::from_index(action.function_id).ok_or(EnvError::UnknownFunction(action.function_id))?;
        let spec = f.spec();
        match (spec.spatial, action.spatial_arg) {
            (true, None) => Err(EnvError::MalformedArgument {
                name: spec.name,
                problem: "requires a spatial argument".into(),
            }),
            (false, Some(_)) => Err(EnvError::MalformedArgument {
                name: spec.name,
                problem: "takes no spatial argument".into(),
            }),
            (true, Some((x, y))) if x >= self.config.resolution || y >= self.config.resolution => {
                Err(EnvError::MalformedArgument {
                    name: spec.name,
                    problem: format!("argument ({x}, {y}) outside the {0}x{0} screen", self.config.resolution),
                })
            }
            _ => Ok(f),
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        match &self.state {
            None => return Err(EnvError::NotReset),
            Some(s) if s.done => return Err(EnvError::EpisodeOver),
            _ => {}
        }
        let mut f = self.validate(action)?;
        if !self.available_actions()[f as usize] {
            self.unavailable_count += 1;
            log::trace!("unavailable function {:?} coerced to no_op", f);
            f = FunctionId::NoOp;
        }
        let n = self.n();
        let world = self.world_size() as i32;
        let minigame = self.minigame;
        let cap = self.config.episode_cap;
        let mut reward = 0.0;
        {
            let s = self.state.as_mut().expect("checked above");
            let arg = action.spatial_arg.map(|(x, y)| (x as i32, y as i32));
            match f {
                FunctionId::NoOp => {}
                FunctionId::SelectAll => s.selected.iter_mut().for_each(|b| *b = true),
                FunctionId::SelectUnit1 | FunctionId::SelectUnit2 => {
                    let which = if f == FunctionId::SelectUnit1 { 0 } else { 1 };
                    for (i, b) in s.selected.iter_mut().enumerate() {
                        *b = i == which;
                    }
                }
                FunctionId::MoveScreen | FunctionId::AttackScreen => {
                    let (x, y) = arg.expect("validated");
                    let dest = (s.camera.0 + x, s.camera.1 + y);
                    let struck = if minigame == Minigame::Hunt && f == FunctionId::AttackScreen {
                        s.targets.iter().position(|&t| t == dest)
                    } else {
                        None
                    };
                    if let Some(i) = struck {
                        s.targets.remove(i);
                        s.seen.remove(i);
                        reward += 1.0;
                    } else {
                        for (u, _) in s.units.iter_mut().zip(&s.selected).filter(|(_, &sel)| sel) {
                            u.dest = Some(dest);
                        }
                    }
                }
                FunctionId::MoveCamera => {
                    let (x, y) = arg.expect("validated");
                    let scale = world / n;
                    let cx = (x * scale + scale / 2 - n / 2).clamp(0, world - n);
                    let cy = (y * scale + scale / 2 - n / 2).clamp(0, world - n);
                    s.camera = (cx, cy);
                }
            }
            s.units.iter_mut().for_each(Unit::advance);
        }

        match minigame {
            Minigame::Beacon => {
                let s = self.state.as_mut().expect("checked above");
                let unit = s.units[0].pos;
                if s.targets[0] == unit {
                    reward += 1.0;
                    // uniform over every cell except the unit's
                    let mut idx = self.rng.gen_range(0..(n * n - 1)) as usize;
                    if idx >= (unit.1 * n + unit.0) as usize {
                        idx += 1;
                    }
                    s.targets[0] = cell(idx, n);
                }
            }
            Minigame::Shards => {
                let s = self.state.as_mut().expect("checked above");
                for u in &s.units {
                    if let Some(i) = s.targets.iter().position(|&t| t == u.pos) {
                        s.targets.swap_remove(i);
                        s.collected_in_batch += 1;
                        reward += 1.0;
                    }
                }
                if s.targets.is_empty() {
                    let occupied: Vec<usize> = s.units.iter().map(|u| (u.pos.1 * n + u.pos.0) as usize).collect();
                    let free: Vec<usize> = (0..(n * n) as usize).filter(|c| !occupied.contains(c)).collect();
                    s.targets = sample(&mut self.rng, free.len(), SHARD_BATCH)
                        .into_iter()
                        .map(|i| cell(free[i], n))
                        .collect();
                    s.collected_in_batch = 0;
                }
            }
            Minigame::Hunt => self.update_visibility(),
        }

        let s = self.state.as_mut().expect("checked above");
        s.step += 1;
        s.score += reward;
        s.done = s.step >= cap || (minigame == Minigame::Hunt && s.targets.is_empty());
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.state().done,
            episode_score: self.state().score,
        })
    }

    fn update_visibility(&mut self) {
        if self.minigame != Minigame::Hunt {
            return;
        }
        let n = self.n();
        let world = self.world_size() as i32;
        let s = self.state.as_mut().expect("reset");
        let (cx, cy) = s.camera;
        for y in cy..cy + n {
            for x in cx..cx + n {
                s.explored[(y * world + x) as usize] = true;
            }
        }
        for (t, seen) in s.targets.iter().zip(s.seen.iter_mut()) {
            if in_window(*t, s.camera, n) {
                *seen = true;
            }
        }
    }

    /// Renders the current state.
    pub fn observation(&self) -> Observation {
        let s = self.state();
        let n = self.n();
        let nu = n as usize;
        let area = nu * nu;
        let world = self.world_size() as i32;
        let scale = world / n;

        let mut screen = vec![0.0f32; self.spec.screen_channels * area];
        let mut put_screen = |ch: usize, p: (i32, i32)| {
            if in_window(p, s.camera, n) {
                let (x, y) = ((p.0 - s.camera.0) as usize, (p.1 - s.camera.1) as usize);
                screen[ch * area + y * nu + x] = 1.0;
            }
        };
        for (u, &sel) in s.units.iter().zip(&s.selected) {
            put_screen(0, u.pos);
            if sel {
                put_screen(2, u.pos);
            }
        }
        for &t in &s.targets {
            put_screen(1, t);
        }

        let mut minimap = vec![0.0f32; self.spec.minimap_channels * area];
        if self.minigame != Minigame::Hunt {
            // the whole world is on screen
            minimap[..area].iter_mut().for_each(|v| *v = 1.0);
        }
        let mut raise = |ch: usize, p: (i32, i32), v: f32| {
            let i = ch * area + (p.1 / scale) as usize * nu + (p.0 / scale) as usize;
            minimap[i] = minimap[i].max(v);
        };
        if self.minigame == Minigame::Hunt {
            for y in 0..world {
                for x in 0..world {
                    if in_window((x, y), s.camera, n) {
                        raise(0, (x, y), 1.0);
                    } else if s.explored[(y * world + x) as usize] {
                        raise(0, (x, y), 0.5);
                    }
                }
            }
            for (&t, &seen) in s.targets.iter().zip(&s.seen) {
                if seen {
                    raise(1, t, 0.5);
                }
            }
        } else {
            for &t in &s.targets {
                raise(1, t, 0.5);
            }
        }
        for u in &s.units {
            raise(1, u.pos, 1.0);
        }

        let selected = s.selected.iter().filter(|&&b| b).count() as f32 / s.units.len() as f32;
        let progress = s.step as f32 / self.config.episode_cap as f32;
        let shape = [self.spec.screen_channels, nu, nu];
        Observation {
            screen: Tensor::from_vec(&shape, screen).expect("screen shape"),
            minimap: Tensor::from_vec(&[self.spec.minimap_channels, nu, nu], minimap).expect("minimap shape"),
            flat: Tensor::from_vec(&[2], vec![selected, progress]).expect("flat shape"),
            available: self.available_actions(),
        }
    }
}

impl State {
    fn new(units: Vec<(i32, i32)>, targets: Vec<(i32, i32)>, camera: (i32, i32)) -> Self {
        let count = units.len();
        Self {
            units: units.into_iter().map(|pos| Unit { pos, dest: None }).collect(),
            selected: vec![false; count],
            targets,
            seen: Vec::new(),
            explored: Vec::new(),
            camera,
            collected_in_batch: 0,
            step: 0,
            score: 0.0,
            done: false,
        }
    }
}

fn cell(index: usize, width: i32) -> (i32, i32) {
    ((index as i32) % width, (index as i32) / width)
}

fn in_window(p: (i32, i32), camera: (i32, i32), n: i32) -> bool {
    p.0 >= camera.0 && p.0 < camera.0 + n && p.1 >= camera.1 && p.1 < camera.1 + n
}
