//! `kbill`: simulate, verify, project and plot Kepler billiards.

mod plot;
mod project;
mod simulate;
mod table;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kepler_billiards::Error;
use log::error;

use crate::project::Direction;
use crate::simulate::Outcome;

const EXIT_CONFIG: u8 = 2;
const EXIT_UNDETERMINED: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "kbill", version, about = "Kepler billiards in the plane and on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more JSON configurations.
    Simulate {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the invariants on seeded random states.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        cases: usize,
        /// Deliberately corrupt one check.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Map a trajectory table between the plane and the sphere.
    Project {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        direction: Direction,
        /// Center offset; read from the run's summary.json when omitted.
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a run as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status for a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) {
        return match e {
            Error::ZeroMass
            | Error::NegativeRadius(_)
            | Error::NegativeBeta(_)
            | Error::InconsistentWall(_)
            | Error::InvalidState(_)
            | Error::SingularPosition(_)
            | Error::PerturbedModel(_)
            | Error::NotInSouthHemisphere(_)
            | Error::WrongHalfPlane(_)
            | Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_UNDETERMINED,
        };
    }
    EXIT_CONFIG
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate { configs, out } => {
            let summaries = simulate::cmd_simulate(&configs, &out)?;
            for s in &summaries {
                println!("{:?}: {} bounces, t_end = {}", s.outcome, s.bounces, s.t_end);
            }
            let undetermined = summaries.iter().any(|s| s.outcome == Outcome::Undetermined);
            Ok(if undetermined { EXIT_UNDETERMINED } else { 0 })
        }
        Command::Verify { seed, cases, inject_fault } => {
            let report = verify::cmd_verify(seed, cases, inject_fault);
            println!("{report}");
            Ok(if report.passed() { 0 } else { EXIT_VERIFY })
        }
        Command::Project { input, direction, a, out } => {
            let path = project::cmd_project(&input, direction, a, out.as_deref())?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Plot { input, out } => {
            let segments = plot::cmd_plot(&input, &out)?;
            println!("{} ({segments} segments)", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BILLIARD_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            error!("{err:#}");
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
