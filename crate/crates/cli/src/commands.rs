//! Subcommand implementations.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gapsac::checkpoint::Checkpoint;
use gapsac::rng::{stream, SimRng};
use gapsac::trainer::{
    evaluate, run_episode, train, write_eval_cells_csv, write_eval_grid_csv, EvalGrid, TrainError,
};
use gapsac::world::{write_trajectory_csv, EpisodeStatus, GapEnv};

use crate::config::{parse_gap, ConfigError, RunConfig};
use crate::plot::{plot_files, PlotError};

pub const RESOLVED_CONFIG: &str = "resolved.cfg";

#[derive(Debug, Parser)]
#[command(name = "gapsac", version, about = "Quadrotor gap traversal: train, evaluate, roll out and plot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy with the gap curriculum.
    Train(TrainArgs),
    /// Success rates of a checkpoint over a grid of gap sizes.
    Eval(EvalArgs),
    /// Record trajectories of a checkpoint.
    Rollout(RolloutArgs),
    /// Render metrics or trajectory CSVs to SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Extra `key=value` assignment, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Train on the final gap size from the first episode.
    #[arg(long)]
    pub no_curriculum: bool,
    /// Stop after this many episodes.
    #[arg(long)]
    pub episodes: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Single cell such as `0.7x0.36`; the reference 5x5 grid by default.
    #[arg(long)]
    pub grid: Option<String>,
    /// Episodes per cell.
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Gap size such as `0.7x0.36`; the configured gap by default.
    #[arg(long)]
    pub gap: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Metrics or trajectory CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "plots")]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Plot(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Checkpoint(ref c) if !matches!(c, gapsac::checkpoint::CheckpointError::Io { .. }) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Config file, then overrides, then dedicated flags.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(w) = common.workers {
        cfg.train.workers = w;
    }
    Ok(cfg)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint<f64>, CliError> {
    Checkpoint::load(path).map_err(|e| match e {
        gapsac::checkpoint::CheckpointError::Io { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Usage(format!("{}: {e}", path.display())),
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(&args.common)?;
    if args.no_curriculum {
        cfg.train.schedule.enabled = false;
    }
    if let Some(n) = args.episodes {
        cfg.train.max_episodes = Some(n);
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(runtime(&cfg.out))?;
    let snap = cfg.out.join(RESOLVED_CONFIG);
    std::fs::write(&snap, cfg.to_text()).map_err(runtime(&snap))?;
    let total = cfg.train.total_episodes();
    let every = (total / 20).max(1);
    let mut successes = 0u64;
    let summary = train(&cfg.train, &cfg.world, Some(&cfg.out), &mut |row| {
        successes += u64::from(row.success);
        if (row.episode + 1) % every == 0 {
            eprintln!(
                "episode {}/{total} phase {} gap {:.3}x{:.3} ema {:.1} successes {successes}",
                row.episode + 1,
                row.phase.number(),
                row.width,
                row.height,
                row.ema_reward
            );
        }
        ControlFlow::Continue(())
    })?;
    println!(
        "trained {} episodes, {} successes, best score {}; outputs in {}",
        summary.episodes,
        summary.successes,
        summary.best_score.map_or_else(|| "n/a".into(), |s| format!("{s:.2}")),
        cfg.out.display()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&args.common)?;
    cfg.validate()?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let grid = match &args.grid {
        Some(g) => {
            let (w, h) = parse_gap(g).map_err(CliError::Usage)?;
            EvalGrid::single(w, h)
        }
        None => EvalGrid::reference(),
    };
    if args.episodes == 0 {
        return Err(CliError::Usage("--episodes must be positive".into()));
    }
    let results = evaluate(&ck.agent.nets.policy, &cfg.world, &grid, args.episodes, cfg.train.seed, cfg.train.workers)?;
    std::fs::create_dir_all(&cfg.out).map_err(runtime(&cfg.out))?;
    write_eval_grid_csv(&cfg.out.join("eval_grid.csv"), &grid, &results)?;
    write_eval_cells_csv(&cfg.out.join("eval_cells.csv"), &results)?;
    for c in &results {
        println!("{:.2}x{:.2}: {}/{} ({:.1}%)", c.width, c.height, c.successes, c.episodes, 100.0 * c.rate());
    }
    Ok(())
}

pub fn cmd_rollout(args: &RolloutArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&args.common)?;
    cfg.validate()?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let mut env = GapEnv::new(cfg.world.clone(), SimRng::new(cfg.train.seed, stream::EVAL))
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_recording(true);
    if let Some(g) = &args.gap {
        let (w, h) = parse_gap(g).map_err(CliError::Usage)?;
        env.set_gap_dims(w, h).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    std::fs::create_dir_all(&cfg.out).map_err(runtime(&cfg.out))?;
    let width = args.count.saturating_sub(1).to_string().len().max(3);
    let mut summary = String::from("episode,status,episode_reward,steps,file\n");
    let mut successes = 0;
    for i in 0..args.count {
        let outcome = run_episode(&mut env, &ck.agent.nets.policy, None)?;
        let name = format!("episode_{i:0width$}.csv");
        let path = cfg.out.join(&name);
        let file = std::fs::File::create(&path).map_err(runtime(&path))?;
        write_trajectory_csv(&outcome.trajectory, std::io::BufWriter::new(file)).map_err(runtime(&path))?;
        successes += usize::from(outcome.status == EpisodeStatus::Success);
        summary.push_str(&format!(
            "{i},{},{},{},{name}\n",
            outcome.status.as_str(),
            outcome.episode_reward,
            outcome.steps
        ));
    }
    let spath = cfg.out.join("summary.csv");
    std::fs::write(&spath, summary).map_err(runtime(&spath))?;
    println!("{successes}/{} successful episodes; trajectories in {}", args.count, cfg.out.display());
    Ok(())
}

pub fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    for f in plot_files(&args.inputs, &args.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Rollout(a) => cmd_rollout(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
