//! Command-line harness: training, evaluation, transfer, architecture
//! comparison and scripted baselines. Every command writes plain CSV.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "a3c", version, about = "A3C agents for grid minigames")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent and write train_log.csv, checkpoints and config.echo.
    Train(RunFlags),
    /// Greedy evaluation of a checkpoint; writes eval.csv.
    Eval(EvalArgs),
    /// Train on a minigame starting from another run's checkpoint.
    Transfer(TransferArgs),
    /// Train several architectures over several seeds and rank them.
    Compare(CompareArgs),
    /// Score the random and scripted policies; writes baselines.csv.
    Baselines(BaselineArgs),
}

/// Run configuration: defaults, then `--config`, then `--set`, then the
/// dedicated flags.
#[derive(Debug, Args, Clone, Default)]
pub struct RunFlags {
    /// File of key=value lines (`#` starts a comment).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set learning_rate=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    minigame: Option<String>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Episode budget.
    #[arg(long)]
    episodes: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    minigame: String,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 120)]
    episode_cap: usize,
    /// Evaluate even if the checkpoint was trained on another minigame.
    #[arg(long)]
    force: bool,
    /// Directory for eval.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TransferArgs {
    /// Checkpoint whose weights initialize the run.
    #[arg(long)]
    source: PathBuf,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated architectures, at least two.
    #[arg(long, value_delimiter = ',', required = true)]
    archs: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    minigame: String,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    resolution: usize,
    #[arg(long, default_value_t = 120)]
    episode_cap: usize,
    /// Directory for baselines.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Train(flags) => commands::train(&flags),
        Command::Eval(a) => commands::eval(
            &a.checkpoint,
            &a.minigame,
            a.episodes,
            a.seed,
            a.episode_cap,
            a.force,
            &a.out,
        ),
        Command::Transfer(a) => commands::transfer(&a.source, &a.run),
        Command::Compare(a) => commands::compare(&a.archs, &a.seeds, &a.run),
        Command::Baselines(a) => {
            commands::baselines(&a.minigame, a.episodes, a.seed, a.resolution, a.episode_cap, &a.out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
