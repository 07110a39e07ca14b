use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurofem::experiments::{run, run_verification, ExperimentConfig, ExperimentName};
use neurofem::Error;

#[derive(Parser)]
#[command(name = "neurofem", version, about = "Neural-network-weighted finite element experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a registered experiment and print its summary as JSON.
    Run {
        experiment: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Certify the state problem described by a config file.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the registered experiments.
    List,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::OutOfDomain(_) | Error::Json(_) => 2,
        Error::SingularMatrix { .. } | Error::SolverFailure { .. } | Error::Diverged { .. } => 3,
        Error::Io(_) => 1,
    }
}

fn execute(cmd: Command) -> Result<String, Error> {
    match cmd {
        Command::Run { experiment, config, out, seed } => {
            let name: ExperimentName = experiment.parse()?;
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path, Some(name))?,
                None => ExperimentConfig::defaults(name),
            };
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            run(&cfg)?.to_json()
        }
        Command::Verify { config, seed } => {
            let mut cfg = ExperimentConfig::load(&config, None)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let summary = run_verification(&cfg)?;
            Ok(serde_json::to_string_pretty(&summary)?)
        }
        Command::List => Ok(ExperimentName::ALL
            .iter()
            .map(|n| format!("{:<20} {}", n.as_str(), n.description()))
            .collect::<Vec<_>>()
            .join("\n")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
