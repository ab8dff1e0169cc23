use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use hocl_cli::commands::{cmd_bench, cmd_check_gradients, cmd_solve, gen_data};
use hocl_cli::{Overrides, RunConfig, EXIT_CONVERGED, EXIT_ERROR};
use hocl_core::Algorithm;

#[derive(Parser)]
#[command(name = "hocl", version, about = "Leader/follower optimal-control solvers for parameter estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration; omitted keys take reference-instance values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// baseline, msa or parallel; overrides the config.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Worker count; HOCL_WORKERS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its bootstrap split.
    GenData(Common),
    /// Run a solver and write result.json and trace.csv.
    Solve(Common),
    /// Compare adjoint gradients with finite differences.
    CheckGradients(Common),
    /// Time the subinterval phases of the time-parallel solver.
    Bench(Common),
}

fn run(cli: Cli) -> Result<i32> {
    let (Command::GenData(c) | Command::Solve(c) | Command::CheckGradients(c) | Command::Bench(c)) = &cli.command;
    let cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ov = Overrides {
        algorithm: c.algorithm,
        workers: c.workers,
        out: c.out.clone(),
    };
    match cli.command {
        Command::GenData(_) => gen_data(&cfg, &ov.out_dir(&cfg)).map(|_| EXIT_CONVERGED),
        Command::Solve(_) => cmd_solve(&cfg, &ov),
        Command::CheckGradients(_) => cmd_check_gradients(&cfg),
        Command::Bench(_) => cmd_bench(&cfg, &ov),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
