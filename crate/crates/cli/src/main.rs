//! `rolling`: scenario-driven frontend for the affine-rolling library.

mod commands;
mod error;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Overrides;
use error::CliError;

#[derive(Parser)]
#[command(name = "rolling", version, about = "Rigid bodies rolling on a moving plane")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Shared {
    /// Preset name (fig5_eps2, fig6_E-8, ...) or path to a scenario TOML file
    #[arg(long)]
    scenario: String,
    /// Integration horizon override
    #[arg(long)]
    t_max: Option<f64>,
    /// Relative tolerance override
    #[arg(long)]
    rtol: Option<f64>,
    /// Absolute tolerance override
    #[arg(long)]
    atol: Option<f64>,
    /// Number of section seeds override
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker thread count (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG scatter plot next to --out
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one trajectory and emit it as CSV
    Simulate(Shared),
    /// Report drift of every first integral known for the scenario
    Invariants(Shared),
    /// Compute a Poincaré section map over a batch of seeds
    Poincare(Shared),
    /// Run internal consistency checks on the scenario
    Selfcheck(Shared),
}

impl Shared {
    fn overrides(&self) -> Overrides {
        Overrides {
            t_max: self.t_max,
            rtol: self.rtol,
            atol: self.atol,
            seeds: self.seeds,
            workers: self.workers,
            out: self.out.clone(),
            svg: self.svg,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let shared = match &cli.cmd {
        Cmd::Simulate(s) | Cmd::Invariants(s) | Cmd::Poincare(s) | Cmd::Selfcheck(s) => s,
    };
    let sc = scenario::load(&shared.scenario)?;
    let ov = shared.overrides();
    match &cli.cmd {
        Cmd::Simulate(_) => commands::simulate(&sc, &ov),
        Cmd::Invariants(_) => commands::invariants(&sc, &ov),
        Cmd::Poincare(_) => commands::poincare(&sc, &ov),
        Cmd::Selfcheck(_) => commands::selfcheck(&sc, &ov),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
