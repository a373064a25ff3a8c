use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sublim::cli::{run, CommandKind};

/// Sublinear expectations, Choquet capacities and G-heat solvers over
/// finite ambiguity sets.
#[derive(Parser)]
#[command(name = "sublim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upper expectation / capacity report (JSON to stdout)
    Expect { config: PathBuf },
    /// Convergence table of CLT values (CSV to stdout)
    Clt { config: PathBuf },
    /// G-heat / G-HJB solver run (snapshot TSVs plus a JSON manifest)
    Pde { config: PathBuf },
    /// DP values against the PDE reference (CSV plus log-log plot data)
    Compare { config: PathBuf },
    /// Property suites; exits nonzero on any violation
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, config) = match &cli.command {
        Command::Expect { config } => (CommandKind::Expect, config),
        Command::Clt { config } => (CommandKind::Clt, config),
        Command::Pde { config } => (CommandKind::Pde, config),
        Command::Compare { config } => (CommandKind::Compare, config),
        Command::Check { config } => (CommandKind::Check, config),
    };
    ExitCode::from(run(kind, config) as u8)
}
