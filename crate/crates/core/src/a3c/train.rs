use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    accumulate_gradients, collect_rollout, evaluate, A3cError, LockMode, LossConfig, OptimizerConfig, Result,
    SharedStore,
};
use crate::ckpt::{self, Checkpoint, Metadata, RngState};
use crate::env::{episode_seed, Env, EnvConfig, Minigame, ObservationSpec};
use crate::net::{build, ArchitectureSpec, Network, Variant};
use crate::numcore::ParamSet;

pub const LOG_HEADER: &str = "episode,worker,global_step,score,wallclock_ms";
const EVAL_LOG_HEADER: &str = "episode,global_step,mean,std,max";

/// Linear decay from `start` to `end` over the first `fraction` of the step
/// budget, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            fraction: 0.25,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = self.fraction * total_steps as f64;
        if horizon <= 0.0 {
            return self.end;
        }
        let t = (step as f64 / horizon).min(1.0);
        self.start + (self.end - self.start) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub minigame: Minigame,
    pub variant: Variant,
    pub env: EnvConfig,
    pub seed: u64,
    pub workers: usize,
    pub t_max: usize,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub lock_mode: LockMode,
    pub epsilon: EpsilonSchedule,
    /// Total episode budget shared by all workers.
    pub episodes: u64,
    /// Greedy evaluation every this many completed episodes (0 disables).
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Score that counts as converged; the first evaluation at or above it
    /// sets [`TrainReport::episodes_to_threshold`].
    pub threshold: Option<f64>,
    pub stop_at_threshold: bool,
    /// Periodic checkpoint every this many episodes (0 disables).
    pub checkpoint_every: u64,
    /// Writes real wall-clock times into the log; off gives byte-identical
    /// logs for identical single-worker runs.
    pub record_wallclock: bool,
    pub time_limit: Option<Duration>,
    pub run_dir: Option<PathBuf>,
    /// Identity of the checkpoint this run was initialized from.
    pub source: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            minigame: Minigame::Beacon,
            variant: Variant::Baseline,
            env: EnvConfig::default(),
            seed: 0,
            workers: 4,
            t_max: 16,
            loss: LossConfig {
                gamma: 0.99,
                entropy_beta: 0.0,
                value_coef: 0.5,
                clip_norm: Some(40.0),
            },
            optimizer: OptimizerConfig::default(),
            lock_mode: LockMode::PerTensor,
            epsilon: EpsilonSchedule::default(),
            episodes: 20_000,
            eval_every: 500,
            eval_episodes: 100,
            eval_seed: 0x5EED,
            threshold: None,
            stop_at_threshold: false,
            checkpoint_every: 0,
            record_wallclock: true,
            time_limit: None,
            run_dir: None,
            source: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(A3cError::Config(m));
        if !(self.loss.gamma > 0.0 && self.loss.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.loss.gamma));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.t_max == 0 {
            return bad("t_max must be at least 1".into());
        }
        if !(self.optimizer.learning_rate > 0.0 && self.optimizer.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.optimizer.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.optimizer.alpha) {
            return bad(format!(
                "rmsprop_alpha must lie in [0, 1), got {}",
                self.optimizer.alpha
            ));
        }
        if self.loss.value_coef < 0.0 || self.loss.entropy_beta < 0.0 {
            return bad("loss coefficients must be non-negative".into());
        }
        if matches!(self.loss.clip_norm, Some(c) if c <= 0.0) {
            return bad("clip_norm must be positive".into());
        }
        let e = self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) || !(0.0..=1.0).contains(&e.fraction) {
            return bad("epsilon start, end and fraction must lie in [0, 1]".into());
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1 when evaluating".into());
        }
        ObservationSpec::new(self.env.resolution)?;
        Ok(())
    }

    pub fn arch(&self) -> Result<ArchitectureSpec> {
        Ok(ArchitectureSpec::new(
            self.variant,
            ObservationSpec::new(self.env.resolution)?,
        ))
    }

    /// Step budget that the exploration schedule is spread over.
    pub fn total_steps(&self) -> u64 {
        self.episodes.saturating_mul(self.env.episode_cap as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub worker: usize,
    pub global_step: u64,
    pub score: f64,
    pub wallclock_ms: u64,
}

impl EpisodeRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.episode, self.worker, self.global_step, self.score, self.wallclock_ms
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct WorkerStats {
    unavailable: u64,
    masked_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    /// Completed training episodes at the time of evaluation.
    pub episode: u64,
    pub global_step: u64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeRecord>,
    pub evals: Vec<EvalRecord>,
    pub best: Option<EvalRecord>,
    pub episodes_to_threshold: Option<u64>,
    pub global_step: u64,
    pub elapsed: Duration,
    pub params: ParamSet<f32>,
    pub optimizer_statistics: Vec<Vec<f32>>,
    /// Actions the environments had to coerce to no_op, over all workers.
    pub unavailable_actions: u64,
    /// Largest probability mass seen on masked function ids.
    pub max_masked_mass: f64,
}

impl TrainReport {
    pub fn steps_per_second(&self) -> f64 {
        self.global_step as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

struct LogState {
    writer: Option<BufWriter<File>>,
    records: Vec<EpisodeRecord>,
}

struct Supervisor {
    evals: Vec<EvalRecord>,
    eval_writer: Option<BufWriter<File>>,
    best: Option<EvalRecord>,
    reached: Option<u64>,
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    arch: ArchitectureSpec,
    store: SharedStore,
    claimed: AtomicU64,
    stop: AtomicBool,
    log: Mutex<LogState>,
    supervisor: Mutex<Supervisor>,
    started: Instant,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Run<'_> {
    fn elapsed_ms(&self) -> u64 {
        if self.cfg.record_wallclock {
            self.started.elapsed().as_millis() as u64
        } else {
            0
        }
    }

    fn out_of_time(&self) -> bool {
        self.cfg.time_limit.is_some_and(|l| self.started.elapsed() >= l)
    }

    fn checkpoint(&self, params: ParamSet<f32>, mean_score: f64, episodes: u64, rng: RngState) -> Checkpoint {
        Checkpoint {
            metadata: Metadata {
                variant: self.arch.variant,
                obs_spec: self.arch.obs_spec,
                minigame: self.cfg.minigame,
                global_step: self.store.global_step(),
                episodes,
                mean_score,
                rng,
                source: self.cfg.source.clone(),
            },
            params,
            optimizer: Some(self.store.statistics()),
        }
    }

    /// Greedy evaluation of the current shared parameters after `episodes`
    /// completed episodes; updates the best checkpoint.
    fn eval_point(&self, episodes: u64, rng: &ChaCha8Rng) -> Result<()> {
        let params = self.store.snapshot();
        let global_step = self.store.global_step();
        let net = Network::new(self.arch, params)?;
        let stats = evaluate(
            &net,
            self.cfg.minigame,
            self.cfg.env,
            self.cfg.eval_episodes,
            self.cfg.eval_seed,
        )?;
        let record = EvalRecord {
            episode: episodes,
            global_step,
            mean: stats.mean,
            std: stats.std,
            max: stats.max,
        };
        log::info!(
            "eval after {episodes} episodes (T={global_step}): mean {:.3} std {:.3} max {}",
            stats.mean,
            stats.std,
            stats.max
        );
        let mut sup = lock(&self.supervisor);
        sup.evals.push(record);
        if let Some(w) = sup.eval_writer.as_mut() {
            writeln!(
                w,
                "{},{},{},{},{}",
                episodes, global_step, stats.mean, stats.std, stats.max
            )?;
            w.flush()?;
        }
        if sup.best.is_none_or(|b| record.mean > b.mean) {
            sup.best = Some(record);
            if let Some(dir) = &self.cfg.run_dir {
                let ck = self.checkpoint(net.params, stats.mean, episodes, RngState::capture(rng));
                ckpt::save(&ck, &dir.join("best.ckpt"))?;
            }
        }
        if let Some(th) = self.cfg.threshold {
            if sup.reached.is_none() && stats.mean >= th {
                sup.reached = Some(episodes);
                if self.cfg.stop_at_threshold {
                    self.stop.store(true, Ordering::SeqCst);
                }
            }
        }
        Ok(())
    }

    fn worker(&self, id: usize) -> Result<WorkerStats> {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(cfg.seed, u64::MAX - id as u64));
        let mut net = Network::new(self.arch, self.store.snapshot())?;
        let mut env = Env::new(cfg.minigame, cfg.env)?;
        let total_steps = cfg.total_steps();
        let mut local_episode = 0u64;
        let mut stats = WorkerStats::default();
        while !self.stop.load(Ordering::SeqCst) {
            if self.claimed.fetch_add(1, Ordering::SeqCst) >= cfg.episodes {
                break;
            }
            env.reset(episode_seed(cfg.seed, ((id as u64) << 40) | local_episode));
            local_episode += 1;
            let score = loop {
                self.store.snapshot_into(&mut net.params);
                let epsilon = cfg.epsilon.at(self.store.global_step(), total_steps);
                let rollout = collect_rollout(&mut env, &net, cfg.t_max, epsilon, &mut rng, true)?;
                stats.masked_mass = stats.masked_mass.max(rollout.masked_mass);
                accumulate_gradients(&mut net, &rollout, &cfg.loss)?;
                self.store.apply_update(&net.params, rollout.len() as u64);
                if let Some(score) = rollout.episode_score {
                    break Some(score);
                }
                if self.out_of_time() {
                    self.stop.store(true, Ordering::SeqCst);
                    break None;
                }
            };
            let Some(score) = score else { break };

            let completed = {
                let mut log = lock(&self.log);
                let record = EpisodeRecord {
                    episode: log.records.len() as u64,
                    worker: id,
                    global_step: self.store.global_step(),
                    score,
                    wallclock_ms: self.elapsed_ms(),
                };
                if let Some(w) = log.writer.as_mut() {
                    writeln!(w, "{}", record.csv_row())?;
                    w.flush()?;
                }
                log.records.push(record);
                log.records.len() as u64
            };
            if cfg.checkpoint_every > 0 && completed % cfg.checkpoint_every == 0 {
                if let Some(dir) = &cfg.run_dir {
                    let ck = self.checkpoint(self.store.snapshot(), f64::NAN, completed, RngState::capture(&rng));
                    ckpt::save(&ck, &dir.join("checkpoints").join(format!("ep{completed}.ckpt")))?;
                }
            }
            if cfg.eval_every > 0 && completed % cfg.eval_every == 0 {
                self.eval_point(completed, &rng)?;
            }
            if self.out_of_time() {
                self.stop.store(true, Ordering::SeqCst);
            }
        }
        // the counter spans every episode of this environment
        stats.unavailable = env.unavailable_count();
        Ok(stats)
    }

    fn guarded_worker(&self, id: usize) -> Result<WorkerStats> {
        let outcome = catch_unwind(AssertUnwindSafe(|| self.worker(id)));
        let result = outcome.unwrap_or_else(|payload| {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(A3cError::WorkerPanicked { worker: id, message })
        });
        if result.is_err() {
            self.stop.store(true, Ordering::SeqCst);
        }
        result
    }
}

/// Runs `config.workers` actor-learners against one shared parameter store
/// until the episode budget, the time limit or the threshold stops them.
///
/// With one worker everything runs on the calling thread and the run is a
/// pure function of the config. `initial` replaces the random initialization
/// (transfer learning).
pub fn train(config: &TrainConfig, initial: Option<ParamSet<f32>>) -> Result<TrainReport> {
    config.validate()?;
    let arch = config.arch()?;
    let params = match initial {
        Some(p) => Network::new(arch, p)?.params,
        None => build::<f32>(&arch, config.seed),
    };
    let (writer, eval_writer) = match &config.run_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            if config.checkpoint_every > 0 {
                fs::create_dir_all(dir.join("checkpoints"))?;
            }
            let mut w = BufWriter::new(File::create(dir.join("train_log.csv"))?);
            if let Some(src) = &config.source {
                writeln!(w, "# source={src}")?;
            }
            writeln!(w, "{LOG_HEADER}")?;
            w.flush()?;
            let mut e = BufWriter::new(File::create(dir.join("eval_log.csv"))?);
            writeln!(e, "{EVAL_LOG_HEADER}")?;
            e.flush()?;
            (Some(w), Some(e))
        }
        None => (None, None),
    };
    let run = Run {
        cfg: config,
        arch,
        store: SharedStore::new(&params, config.optimizer, config.lock_mode),
        claimed: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        log: Mutex::new(LogState {
            writer,
            records: Vec::new(),
        }),
        supervisor: Mutex::new(Supervisor {
            evals: Vec::new(),
            eval_writer,
            best: None,
            reached: None,
        }),
        started: Instant::now(),
    };

    if config.eval_every > 0 {
        run.eval_point(0, &ChaCha8Rng::seed_from_u64(config.seed))?;
    }
    let worker_stats = if config.workers == 1 {
        vec![run.guarded_worker(0)?]
    } else {
        let results: Vec<Result<WorkerStats>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..config.workers)
                .map(|id| {
                    let run = &run;
                    s.spawn(move || run.guarded_worker(id))
                })
                .collect();
            handles
                .into_iter()
                .enumerate()
                .map(|(id, h)| {
                    h.join().unwrap_or_else(|_| {
                        Err(A3cError::WorkerPanicked {
                            worker: id,
                            message: "thread join failed".into(),
                        })
                    })
                })
                .collect()
        });
        results.into_iter().collect::<Result<Vec<_>>>()?
    };
    let elapsed = run.started.elapsed();

    let final_params = run.store.snapshot();
    let log = run.log.into_inner().unwrap_or_else(|e| e.into_inner());
    let sup = run.supervisor.into_inner().unwrap_or_else(|e| e.into_inner());
    if let Some(dir) = &config.run_dir {
        let episodes = log.records.len() as u64;
        let mean_recent = {
            let tail = &log.records[log.records.len().saturating_sub(100)..];
            if tail.is_empty() {
                f64::NAN
            } else {
                tail.iter().map(|r| r.score).sum::<f64>() / tail.len() as f64
            }
        };
        let ck = Checkpoint {
            metadata: Metadata {
                variant: arch.variant,
                obs_spec: arch.obs_spec,
                minigame: config.minigame,
                global_step: run.store.global_step(),
                episodes,
                mean_score: mean_recent,
                rng: RngState::capture(&ChaCha8Rng::seed_from_u64(config.seed)),
                source: config.source.clone(),
            },
            params: final_params.clone(),
            optimizer: Some(run.store.statistics()),
        };
        ckpt::save(&ck, &dir.join("final.ckpt"))?;
    }
    Ok(TrainReport {
        episodes: log.records,
        evals: sup.evals,
        best: sup.best,
        episodes_to_threshold: sup.reached,
        global_step: run.store.global_step(),
        elapsed,
        optimizer_statistics: run.store.statistics(),
        params: final_params,
        unavailable_actions: worker_stats.iter().map(|s| s.unavailable).sum(),
        max_masked_mass: worker_stats.iter().map(|s| s.masked_mass).fold(0.0, f64::max),
    })
}

/// Environment steps per second of `workers` learners over `duration`.
pub fn measure_throughput(base: &TrainConfig, workers: usize, duration: Duration) -> Result<f64> {
    let cfg = TrainConfig {
        workers,
        episodes: u64::MAX / 2,
        eval_every: 0,
        checkpoint_every: 0,
        run_dir: None,
        time_limit: Some(duration),
        ..base.clone()
    };
    Ok(train(&cfg, None)?.steps_per_second())
}
