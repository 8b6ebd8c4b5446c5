//! Command-line entry point. Subcommands are one-to-one with the
//! `command` field of the TOML configuration; naming one that disagrees
//! with the file is an error rather than a silent reinterpretation.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qfim_sbm_cli::config::{CommandKind, RunConfig};
use qfim_sbm_cli::dynamics::run_dynamics;
use qfim_sbm_cli::fit::run_fit;
use qfim_sbm_cli::lindblad_run::run_lindblad;
use qfim_sbm_cli::statics::run_static_sweep;
use qfim_sbm_cli::validate::run_validate;

#[derive(Parser)]
#[command(name = "qfim-sbm", version, about = "Spin-boson QFIM batch driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-state sweep over the configured (alpha, h, beta) grid.
    StaticSweep(RunArgs),
    /// Quench dynamics with the QFI tracked along the trajectory.
    Dynamics(RunArgs),
    /// Analytic weak-coupling benchmark trajectories.
    Lindblad(RunArgs),
    /// Peak extraction and power-law fits over sweep CSVs.
    Fit(RunArgs),
    /// Built-in oracle suite; exits nonzero if any check fails.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps. Defaults to QFIM_SBM_WORKERS, then 1.
    #[arg(long)]
    workers: Option<usize>,
    /// Resume an interrupted sweep from its journal and checkpoints.
    #[arg(long)]
    resume: bool,
    /// Stop a sweep after this many newly computed points; the run stays
    /// resumable.
    #[arg(long)]
    max_points: Option<usize>,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::StaticSweep(a)
            | Command::Dynamics(a)
            | Command::Lindblad(a)
            | Command::Fit(a)
            | Command::Validate(a) => a,
        }
    }

    fn kind(&self) -> CommandKind {
        match self {
            Command::StaticSweep(_) => CommandKind::StaticSweep,
            Command::Dynamics(_) => CommandKind::Dynamics,
            Command::Lindblad(_) => CommandKind::Lindblad,
            Command::Fit(_) => CommandKind::Fit,
            Command::Validate(_) => CommandKind::Validate,
        }
    }
}

fn main() -> Result<()> {
    // The numerics are parallelized at the chain level; keep the BLAS
    // sequential so worker counts mean what they say.
    std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    std::env::set_var("OMP_NUM_THREADS", "1");

    let cli = Cli::parse();
    let args = cli.command.args();
    let mut cfg = RunConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if cfg.command != cli.command.kind() {
        bail!(
            "config names command {:?} but the {:?} subcommand was invoked",
            cfg.command,
            cli.command.kind()
        );
    }
    cfg.validate_shape()?;

    let workers = args
        .workers
        .or_else(|| std::env::var("QFIM_SBM_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1);

    match cfg.command {
        CommandKind::StaticSweep => {
            run_static_sweep(&cfg, args.resume, workers, args.max_points)?;
        }
        CommandKind::Dynamics => {
            run_dynamics(&cfg)?;
        }
        CommandKind::Lindblad => {
            run_lindblad(&cfg)?;
        }
        CommandKind::Fit => {
            run_fit(&cfg)?;
        }
        CommandKind::Validate => {
            if !run_validate(&cfg)? {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
