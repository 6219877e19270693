use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use a3c_core::a3c::{evaluate, train as run_training, A3cError, TrainConfig, TrainReport};
use a3c_core::ckpt::{self, transfer_init, CkptError};
use a3c_core::env::{
    convergence_threshold, oracle_policy, run_episodes, EnvConfig, Minigame, ObservationSpec, RandomPolicy, ScoreStats,
};
use a3c_core::net::{ArchitectureSpec, Network, Variant};
use anyhow::Context;

use crate::config::{ConfigError, RunConfig};
use crate::RunFlags;

/// Episodes of the scripted oracle behind a convergence threshold.
const THRESHOLD_EPISODES: usize = 1000;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Incompatible(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Incompatible(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Incompatible(m) => f.write_str(m),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<CkptError> for Failure {
    fn from(e: CkptError) -> Self {
        match e {
            CkptError::Incompatible { .. } => Failure::Incompatible(e.to_string()),
            e => Failure::Runtime(e.into()),
        }
    }
}

impl From<A3cError> for Failure {
    fn from(e: A3cError) -> Self {
        match e {
            A3cError::Config(m) => Failure::Usage(m),
            A3cError::Ckpt(c) => c.into(),
            e => Failure::Runtime(e.into()),
        }
    }
}

type Result<T = (), E = Failure> = std::result::Result<T, E>;

fn usage(m: impl Into<String>) -> Failure {
    Failure::Usage(m.into())
}

fn parse_minigame(s: &str) -> Result<Minigame> {
    s.parse().map_err(|e| usage(format!("{e}")))
}

fn build_config(flags: &RunFlags) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for pair in &flags.set {
        cfg.set_pair(pair)?;
    }
    let named = [
        ("minigame", &flags.minigame),
        ("arch", &flags.arch),
        ("workers", &flags.workers),
        ("seed", &flags.seed),
        ("episodes", &flags.episodes),
        ("resolution", &flags.resolution),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(out) = &flags.out {
        cfg.set("out", &out.display().to_string())?;
    }
    Ok(cfg)
}

fn summarize(report: &TrainReport, dir: &Path) {
    println!("episodes     {}", report.episodes.len());
    println!("global step  {}", report.global_step);
    if let Some(best) = report.best {
        println!("best eval    {:.3} after {} episodes", best.mean, best.episode);
    }
    if let Some(e) = report.episodes_to_threshold {
        println!("threshold    reached after {e} episodes");
    }
    println!("run dir      {}", dir.display());
}

fn start_run(cfg: &RunConfig) -> Result<TrainConfig> {
    let train = cfg.resolve()?;
    train.validate()?;
    let dir = train.run_dir.clone().expect("resolved config has a run dir");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.echo"), cfg.echo())?;
    Ok(train)
}

pub fn train(flags: &RunFlags) -> Result {
    let cfg = build_config(flags)?;
    let train = start_run(&cfg)?;
    let report = run_training(&train, None)?;
    summarize(&report, train.run_dir.as_deref().expect("run dir"));
    Ok(())
}

pub fn eval(
    checkpoint: &Path,
    minigame: &str,
    episodes: usize,
    seed: u64,
    episode_cap: usize,
    force: bool,
    out: &Path,
) -> Result {
    let minigame = parse_minigame(minigame)?;
    if episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let ck = ckpt::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    if ck.metadata.minigame != minigame && !force {
        return Err(Failure::Incompatible(format!(
            "checkpoint was trained on {} but evaluation asks for {minigame} (pass --force to evaluate anyway)",
            ck.metadata.minigame
        )));
    }
    let env = EnvConfig {
        resolution: ck.metadata.obs_spec.resolution,
        episode_cap,
    };
    let net = Network::new(ck.metadata.arch(), ck.params).context("rebuilding the network")?;
    let stats = evaluate(&net, minigame, env, episodes, seed)?;
    fs::create_dir_all(out)?;
    let mut w = fs::File::create(out.join("eval.csv"))?;
    writeln!(w, "episode,score")?;
    for (i, s) in stats.scores.iter().enumerate() {
        writeln!(w, "{i},{s}")?;
    }
    println!("mean {:.4}", stats.mean);
    println!("std  {:.4}", stats.std);
    println!("max  {}", stats.max);
    Ok(())
}

pub fn transfer(source: &Path, flags: &RunFlags) -> Result {
    let mut cfg = build_config(flags)?;
    let ck = ckpt::load(source).with_context(|| format!("loading {}", source.display()))?;
    // architecture and resolution default to the source's
    if !cfg.is_set("arch") {
        cfg.set("arch", ck.metadata.variant.name())?;
    }
    if !cfg.is_set("resolution") {
        cfg.set("resolution", &ck.metadata.obs_spec.resolution.to_string())?;
    }
    let minigame = cfg.minigame()?;
    let spec = ObservationSpec::new(cfg.train.env.resolution).map_err(|e| usage(e.to_string()))?;
    let target = ArchitectureSpec::new(cfg.variant(), spec);
    let label = source.display().to_string();
    let init = transfer_init(&ck, &label, minigame, &target)?;
    cfg.train.source = Some(init.source.clone());
    let train = start_run(&cfg)?;
    let report = run_training(&train, Some(init.params))?;
    summarize(&report, train.run_dir.as_deref().expect("run dir"));
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn compare(archs: &[String], seeds: &[u64], flags: &RunFlags) -> Result {
    let variants = archs
        .iter()
        .map(|a| a.parse::<Variant>().map_err(|e| usage(format!("{e}"))))
        .collect::<Result<Vec<_>>>()?;
    if variants.len() < 2 {
        return Err(usage("compare needs at least two architectures"));
    }
    if seeds.is_empty() {
        return Err(usage("compare needs at least one seed"));
    }
    let base = build_config(flags)?;
    let minigame = base.minigame()?;
    let root = match &base.out {
        Some(p) => p.clone(),
        None => format!("runs/compare-{minigame}").into(),
    };
    let threshold = match base.train.threshold {
        Some(t) => t,
        None => convergence_threshold(minigame, base.train.env, THRESHOLD_EPISODES, 0)
            .map_err(|e| Failure::Runtime(e.into()))?,
    };
    fs::create_dir_all(&root)?;
    let mut csv = fs::File::create(root.join("compare.csv"))?;
    writeln!(csv, "variant,seed,best_score,episodes_to_threshold")?;
    let mut rows: Vec<(Variant, u64, f64, Option<u64>)> = Vec::new();
    for &variant in &variants {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.set("arch", variant.name())?;
            cfg.set("seed", &seed.to_string())?;
            cfg.set("threshold", &threshold.to_string())?;
            cfg.out = Some(root.join(format!("{variant}-s{seed}")));
            let train = start_run(&cfg)?;
            let report = run_training(&train, None)?;
            let best = report.best.map_or(f64::NAN, |b| b.mean);
            let reached = report.episodes_to_threshold;
            writeln!(
                csv,
                "{variant},{seed},{best},{}",
                reached.map_or(String::new(), |e| e.to_string())
            )?;
            csv.flush()?;
            rows.push((variant, seed, best, reached));
        }
    }
    let table = summary_table(&variants, &rows, threshold);
    print!("{table}");
    fs::write(root.join("compare_summary.txt"), table)?;
    Ok(())
}

/// One line per architecture, best median score first.
fn summary_table(variants: &[Variant], rows: &[(Variant, u64, f64, Option<u64>)], threshold: f64) -> String {
    let mut lines: Vec<(f64, String)> = variants
        .iter()
        .map(|&v| {
            let mine: Vec<_> = rows.iter().filter(|r| r.0 == v).collect();
            let mut best: Vec<f64> = mine.iter().map(|r| r.2).collect();
            let top = best.iter().copied().fold(f64::NAN, f64::max);
            let med = median(&mut best);
            let mut reached: Vec<f64> = mine.iter().filter_map(|r| r.3.map(|e| e as f64)).collect();
            let hit = reached.len();
            let med_ep = if hit == 0 {
                "-".to_string()
            } else {
                format!("{:.0}", median(&mut reached))
            };
            (
                med,
                format!(
                    "{:<10} {:>12.3} {:>10.3} {:>6}/{:<3} {:>16}",
                    v.name(),
                    med,
                    top,
                    hit,
                    mine.len(),
                    med_ep
                ),
            )
        })
        .collect();
    lines.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = format!("threshold {threshold:.3}\n");
    out.push_str(&format!(
        "{:<4} {:<10} {:>12} {:>10} {:>10} {:>16}\n",
        "rank", "arch", "median best", "max best", "reached", "median episodes"
    ));
    for (i, (_, l)) in lines.iter().enumerate() {
        out.push_str(&format!("{:<4} {l}\n", i + 1));
    }
    out
}

pub fn baselines(
    minigame: &str,
    episodes: usize,
    seed: u64,
    resolution: usize,
    episode_cap: usize,
    out: &Path,
) -> Result {
    let minigame = parse_minigame(minigame)?;
    if episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    ObservationSpec::new(resolution).map_err(|e| usage(e.to_string()))?;
    let env = EnvConfig {
        resolution,
        episode_cap,
    };
    let run = |policy: &mut dyn a3c_core::env::Policy| -> Result<ScoreStats> {
        run_episodes(minigame, env, policy, episodes, seed).map_err(|e| Failure::Runtime(e.into()))
    };
    let mut rows = vec![("random", run(&mut RandomPolicy)?)];
    match oracle_policy(minigame) {
        Ok(mut oracle) => rows.push(("oracle", run(oracle.as_mut())?)),
        Err(e) => println!("note: {e}; reporting the random policy only"),
    }
    fs::create_dir_all(out)?;
    let mut w = fs::File::create(out.join("baselines.csv"))?;
    writeln!(w, "policy,mean,std,max,episodes")?;
    println!(
        "{:<8} {:>10} {:>10} {:>8} {:>9}",
        "policy", "mean", "std", "max", "episodes"
    );
    for (name, s) in &rows {
        writeln!(w, "{name},{},{},{},{}", s.mean, s.std, s.max, s.episodes)?;
        println!(
            "{name:<8} {:>10.4} {:>10.4} {:>8} {:>9}",
            s.mean, s.std, s.max, s.episodes
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_ranks_by_median_best() {
        let rows = vec![
            (Variant::Baseline, 1, 10.0, Some(300)),
            (Variant::Baseline, 2, 2.0, None),
            (Variant::Baseline, 3, 3.0, None),
            (Variant::PlusConv, 1, 4.0, Some(500)),
            (Variant::PlusConv, 2, 5.0, Some(700)),
            (Variant::PlusConv, 3, 1.0, None),
        ];
        let table = summary_table(&[Variant::Baseline, Variant::PlusConv], &rows, 4.5);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[2].contains("plusconv"), "{table}");
        assert!(lines[3].contains("baseline"), "{table}");
        assert!(lines[2].contains("2/3"));
        assert!(lines[2].contains("600"));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(usage("x").exit_code(), 2);
        let inc: Failure = CkptError::Incompatible {
            tensor: "t".into(),
            detail: "d".into(),
        }
        .into();
        assert_eq!(inc.exit_code(), 3);
        assert_eq!(Failure::Runtime(anyhow::anyhow!("boom")).exit_code(), 1);
    }
}
