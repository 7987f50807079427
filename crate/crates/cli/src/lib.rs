//! Command-line driver: config loading, the five subcommands, artifact
//! formats and SVG plots.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::threshold_label;
use crate::config::EvalConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "acute",
    version,
    about = "Curriculum search in a grid world, transfer to a continuous world"
)]
pub struct Cli {
    /// Worker threads for trials and search nodes; outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config and ACUTE_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config and ACUTE_OUT_DIR.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Beam-search grid-world curricula; writes manifest.json and lf_log.csv.
    OptimizeLf(RunArgs),
    /// Train through the mapped curricula; writes curve.csv, run.json,
    /// checkpoints/ and replays/.
    RunHf {
        #[command(flatten)]
        run: RunArgs,
        /// Curriculum manifest; defaults to <out>/manifest.json, searched
        /// for when missing.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Transfer metrics of run directories against a baseline run.
    Eval {
        /// Baseline run directory.
        #[arg(long)]
        baseline: PathBuf,
        /// Config whose [eval] table sets the threshold and jumpstart window.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Learning-curve SVG from curve CSVs, and optionally an episode replay.
    Plot {
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        grid_points: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        csvs: Vec<PathBuf>,
    },
    /// Check a config and print its digest and derived targets.
    ValidateConfig(RunArgs),
}

fn env_var(key: &str) -> Option<String> {
    std::env::var(key).ok()
}

fn load(args: &RunArgs) -> Result<config::Experiment, CliError> {
    commands::load_experiment(
        args.config.as_deref(),
        args.seed,
        args.out.as_deref(),
        env_var,
    )
}

/// Runs one parsed command on a pool of `cli.jobs` threads.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Runtime {
            kind: "ThreadPoolError",
            detail: e.to_string(),
        })?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::OptimizeLf(args) => {
            let exp = load(&args)?;
            let m = commands::optimize_lf(&exp)?;
            for t in &m.trials {
                let goals: Vec<String> = t
                    .tasks
                    .iter()
                    .map(|x| x.lf_params.goal.to_string())
                    .collect();
                println!(
                    "trial {}: sunk_cost={} curriculum=[{}]",
                    t.trial,
                    t.sunk_cost_timesteps,
                    goals.join(", ")
                );
            }
        }
        Command::RunHf { run, manifest } => {
            let exp = load(&run)?;
            let s = commands::run_hf(&exp, manifest.as_deref())?;
            for t in &s.trials {
                println!(
                    "trial {}: sunk_cost={} total={} time_to_threshold={}",
                    t.trial,
                    t.sunk_cost_timesteps,
                    t.total_timesteps,
                    threshold_label(t.time_to_threshold)
                );
            }
        }
        Command::Eval {
            baseline,
            config,
            out,
            runs,
        } => {
            let eval = match config {
                Some(p) => {
                    let cfg = config::ExperimentConfig::load(&p)?;
                    cfg.resolve()?;
                    cfg.eval
                }
                None => EvalConfig::default(),
            };
            let o = commands::eval(&baseline, &runs, &eval, &out)?;
            for r in &o.metrics {
                let js = r.jumpstart.map_or("-".into(), |v| format!("{v:.2}"));
                let d = r
                    .delta_time_to_threshold
                    .map_or("-".into(), |v| v.to_string());
                println!(
                    "{} trial {}: jumpstart={js} delta_time_to_threshold={d}",
                    r.method, r.trial
                );
            }
        }
        Command::Plot {
            replay,
            grid_points,
            out,
            csvs,
        } => {
            commands::plot(&csvs, replay.as_deref(), grid_points, &out)?;
        }
        Command::ValidateConfig(args) => print!("{}", commands::describe(&load(&args)?)),
    }
    Ok(())
}
