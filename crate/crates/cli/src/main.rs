mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::exit::CliError;

/// Mesh-free value iteration for optimal control problems.
#[derive(Parser, Debug)]
#[command(name = "shepard-hjb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides SHEPARD_HJB_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (overrides SHEPARD_HJB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip tuning and solve at this theta.
    #[arg(long, global = true)]
    fixed_theta: Option<f64>,
    /// Independent runs per table row; run i uses seed + i.
    #[arg(long, global = true)]
    repeats: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the mesh and report its size, separation and fill distance.
    Mesh,
    /// Tune theta and solve; writes value.csv, value.json and profile.csv.
    Solve,
    /// Run feedback trajectories from a stored value function.
    Simulate,
    /// Regenerate a results table.
    Table {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(commands::TABLES))]
        id: String,
    },
    /// Property checks on the configured mesh.
    Check,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Input("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        commands::apply_seed(&mut cfg, seed);
    }
    if let Some(r) = cli.repeats {
        if r == 0 {
            return Err(CliError::Input("--repeats must be at least 1".into()));
        }
        cfg.repeats = r;
    }
    if let Some(t) = cli.fixed_theta {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Input("--fixed-theta must be positive".into()));
        }
    }
    if let Some(n) = config::resolve_threads(cli.threads)? {
        if n == 0 {
            return Err(CliError::Input("thread count must be at least 1".into()));
        }
        set_threads(n)?;
    }
    let ctx = Context {
        out: config::resolve_out_dir(cli.out.as_deref(), &cfg),
        hash: cfg.hash(),
        fixed_theta: cli.fixed_theta,
        cfg,
    };
    match cli.command {
        Command::Mesh => commands::cmd_mesh(&ctx),
        Command::Solve => commands::cmd_solve(&ctx),
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Table { id } => commands::cmd_table(&ctx, &id),
        Command::Check => commands::cmd_check(&ctx),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> Result<(), CliError> {
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INPUT } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("shepard-hjb: {e}");
            ExitCode::from(e.code())
        }
    }
}
