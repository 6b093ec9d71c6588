//! `subopt`: suboptimal LQR and consensus-protocol synthesis from JSON
//! problem files.

mod commands;
mod config;
mod report;

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Overrides;
use crate::config::Mode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] subopt_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_infeasibility() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "subopt", version, about = "Suboptimal LQR and consensus protocol synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ε-suboptimal state feedback for a single plant.
    Lqr(Args),
    /// Structured consensus protocol with cost bound.
    Synth(Args),
    /// Cost bound for a given protocol or a scaled family of protocols.
    Bound(Args),
    /// Laplacian-scaled baseline protocol.
    Baseline(Args),
    /// Closed-loop simulation of a given protocol.
    Simulate(Args),
    /// Run the mode named in the config file.
    Run(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json and trajectory.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also simulate the closed loop and write trajectory.csv.
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let (requested, args) = match cli.command {
        Command::Lqr(a) => (Some(Mode::Lqr), a),
        Command::Synth(a) => (Some(Mode::Synth), a),
        Command::Bound(a) => (Some(Mode::Bound), a),
        Command::Baseline(a) => (Some(Mode::Baseline), a),
        Command::Simulate(a) => (Some(Mode::Simulate), a),
        Command::Run(a) => (None, a),
    };
    let cfg = config::load(&args.config)?;
    let mode = match (requested, cfg.mode) {
        (Some(r), Some(c)) if r != c => {
            return Err(CliError::Usage(format!(
                "command `{}` does not match config mode `{}`",
                r.name(),
                c.name()
            )))
        }
        (Some(m), _) | (None, Some(m)) => m,
        (None, None) => {
            return Err(CliError::Config("field `mode`: required by `run`".into()))
        }
    };
    let overrides = Overrides {
        delta: args.delta,
        horizon: args.horizon,
        dt: args.dt,
        csv: args.csv,
    };
    let outcome = commands::run(mode, &cfg, &overrides)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("report.json"), report::to_string(&outcome.report))?;
    if let Some(traj) = &outcome.trajectory {
        let file = fs::File::create(args.out.join("trajectory.csv"))?;
        subopt_core::sim::write_csv(traj, BufWriter::new(file))?;
    }
    Ok(outcome.summary)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("subopt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
