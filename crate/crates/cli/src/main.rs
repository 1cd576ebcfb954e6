mod commands;
mod config;
mod error;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "quench", version, about = "Quench dynamics of Rydberg-dressed lattice spins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correlators after a fixed-detuning pulse, over a detuning scan.
    Sudden(Common),
    /// Correlators at checkpoint times along a detuning ramp.
    Ramp(Common),
    /// Snapshots of the exact end-of-schedule state.
    Sample(Common),
    /// Correlators, sub-system statistics and correlation length of a snapshot file.
    Analyze(Common),
    /// Fit of interaction strength and detection efficiency to a correlator scan.
    Fit(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the hardware parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the expansion order.
    #[arg(long)]
    order: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = common.order {
        cfg.solver.order = o;
    }
    if let Some(d) = &common.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config { key: String::new(), line: None, message: "--threads must be positive".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config { key: String::new(), line: None, message: e.to_string() })?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, cmd): (&Common, fn(&RunConfig) -> Result<(), CliError>) = match &cli.command {
        Command::Sudden(c) => (c, commands::sudden),
        Command::Ramp(c) => (c, commands::ramp),
        Command::Sample(c) => (c, commands::sample),
        Command::Analyze(c) => (c, commands::analyze),
        Command::Fit(c) => (c, commands::fit),
    };
    cmd(&load(common)?)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
