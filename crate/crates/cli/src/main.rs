use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cordes_fem_cli::{run, CliError, ConfigFile, RunArgs, RunConfig};

#[derive(Parser)]
#[command(name = "cordes-fem", version, about = "Adaptive finite elements for A:D²u = f")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one benchmark and write its convergence table
    Run(RunArgs),
}

fn execute(args: &RunArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let config = RunConfig::resolve(args, &file)?;
    let result = run(&config)?;
    if let Some(last) = result.records.last() {
        eprintln!(
            "{} level(s), final ndof {}, eta {:.6e}",
            result.records.len(),
            last.ndof,
            last.eta
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
