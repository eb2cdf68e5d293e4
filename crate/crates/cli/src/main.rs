mod check;
mod hartree;
mod record;
mod report;
mod run;
mod strichartz;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use record::Failure;

#[derive(Parser, Debug)]
#[command(name = "schatten-lab", version = record::VERSION, about = "Randomized Strichartz experiments and Hartree solvers")]
struct Cli {
    /// Worker threads; overrides SCHATTEN_WORKERS. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo moment tables of randomized densities.
    Strichartz {
        #[command(subcommand)]
        cmd: strichartz::StrichartzCmd,
    },
    /// Hartree solvers around a stationary background.
    Hartree {
        #[command(subcommand)]
        cmd: hartree::HartreeCmd,
    },
    /// Exact exponent checks.
    Check {
        #[command(subcommand)]
        cmd: check::CheckCmd,
    },
    /// Same as `hartree calibrate-l1`.
    CalibrateL1(run::RunArgs),
    /// Aggregate run records into one table.
    Report(report::ReportArgs),
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SCHATTEN_WORKERS") {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| Failure::Invalid(format!("SCHATTEN_WORKERS={s} is not a count")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Failure::Invalid("worker count must be at least 1".into()));
    }
    Ok(n)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = workers(cli.workers)? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Invalid(e.to_string()))?;
    }
    match &cli.command {
        Command::Strichartz { cmd } => strichartz::run(cmd),
        Command::Hartree { cmd } => hartree::run(cmd),
        Command::Check { cmd } => check::run(cmd),
        Command::CalibrateL1(a) => hartree::calibrate_command(a, "calibrate-l1"),
        Command::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
