//! Command-line driver: mesh generation, steady sweeps, thresholds, the
//! modal basis, transient runs and bifurcation scans, all from one config
//! file. Exit codes: 0 success, 2 validation error, 3 solver failure
//! (partial outputs kept), 4 data-integrity violation.

mod commands;
mod config;
mod manifest;
mod svg;

use clap::{Parser, Subcommand};
use commands::{CmdError, Ctx};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "fsilab", version, about = "spring-mounted body in a viscous stream: numerical laboratory")]
struct Cli {
    /// run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// output directory (default: [output].directory or "out")
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// worker threads for independent sweep samples
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// random seed for eigensolver starts
    #[arg(long, global = true, default_value_t = 707)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// generate and validate the annulus mesh, write the grid file
    Mesh,
    /// continuation sweep over the lambda grid
    Steady,
    /// uniqueness and stability thresholds along a saved branch
    Thresholds,
    /// coupled Stokes eigenbasis
    Modes,
    /// monolithic transient run with the energy monitor
    Transient,
    /// eigenvalue-path scan and steady-bifurcation report
    Bifurcate,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config PATH is required");
            return 2;
        }
    };
    let cfg_text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return 2;
        }
    };
    let cfg = match config::RunConfig::parse(&cfg_text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { cfg: &cfg, cfg_text: &cfg_text, out: &out, jobs: cli.jobs, seed: cli.seed };
    let result = match cli.command {
        Command::Mesh => commands::cmd_mesh(&ctx),
        Command::Steady => commands::cmd_steady(&ctx),
        Command::Thresholds => commands::cmd_thresholds(&ctx),
        Command::Modes => commands::cmd_modes(&ctx),
        Command::Transient => commands::cmd_transient(&ctx),
        Command::Bifurcate => commands::cmd_bifurcate(&ctx),
    };
    match result {
        Ok(()) => 0,
        Err(CmdError { code, message }) => {
            eprintln!("error: {message}");
            code
        }
    }
}
