use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndop_cli::{commands, RunConfig, Status, CONFIG_SCHEMA};

/// Periodic solutions of N-DOP marine ecosystem models with prescribed
/// total phosphorus.
#[derive(Parser)]
#[command(name = "ndop", version)]
struct Cli {
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave wall-clock values out of CSV outputs.
    #[arg(long)]
    reproducible: bool,
    /// Overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic solve; writes trajectory, report, snapshot and plots.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Snapshot to start from instead of the constant state.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Structural checks of velocity, transport operator and reactions.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Two-box configuration against the independent integrator.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Fixed-point solve against naive spin-up.
    CompareSpinup {
        #[command(flatten)]
        common: Common,
    },
    /// Prints an annotated reference config.
    PrintConfigSchema,
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if common.reproducible {
        cfg.reproducible = true;
    }
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Solve { common, restart } => {
            let (cfg, out) = load(&common)?;
            commands::solve(&cfg, &out, restart.as_deref())
        }
        Command::Verify { common } => {
            let (cfg, out) = load(&common)?;
            commands::verify(&cfg, &out)
        }
        Command::Oracle { common } => {
            let (cfg, out) = load(&common)?;
            commands::oracle(&cfg, &out)
        }
        Command::CompareSpinup { common } => {
            let (cfg, out) = load(&common)?;
            commands::compare_spinup(&cfg, &out)
        }
        Command::PrintConfigSchema => {
            print!("{CONFIG_SCHEMA}");
            Ok(Status::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    match run(cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Failure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
