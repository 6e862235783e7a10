mod commands;
mod config;
mod error;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crustfem::ExecMode;

use commands::{Context, Summary};
use config::{Ini, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "crustfem", version, about = "Quadratic-tet elasticity solver with fault Green's functions and slip inversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines in sections)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 runs the kernels sequentially
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Right-hand sides per solver call, overriding `[solver] batch_size`
    #[arg(long, global = true)]
    batch: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate the box mesh and its boundary constraints
    Mesh,
    /// Solve for one or more right-hand sides
    Solve,
    /// Compute the Green's function bank for unit slips on the fault
    Greens,
    /// Regularized slip inversion with L-curve weight selection
    Invert,
    /// Check the element operator against independent oracles
    Verify,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_ini(&Ini::load(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(b) = cli.batch {
        if b == 0 {
            return Err(CliError::Invalid("--batch must be at least 1".into()));
        }
        cfg.solver.batch_size = b;
    }
    let mode = match cli.workers {
        Some(0) => return Err(CliError::Invalid("--workers must be at least 1".into())),
        Some(1) => ExecMode::Serial,
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            ExecMode::Parallel
        }
        None => ExecMode::Parallel,
    };
    Ok(Context {
        cfg,
        out: cli.out.clone(),
        seed: cli.seed,
        mode,
    })
}

fn run(cli: &Cli) -> Result<Summary, CliError> {
    let ctx = context(cli)?;
    match cli.command {
        Command::Mesh => commands::cmd_mesh(&ctx),
        Command::Solve => commands::cmd_solve(&ctx),
        Command::Greens => commands::cmd_greens(&ctx),
        Command::Invert => commands::cmd_invert(&ctx),
        Command::Verify => verify::cmd_verify(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for l in summary.lines() {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
