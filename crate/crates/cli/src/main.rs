use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vtsdd::checks::{property_suite, table_accounting, CheckOutcome};
use vtsdd::harness::{parse_config, run_experiment, Summary};
use vtsdd::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "vtsdd", version, about = "Domain-decomposed interior-point topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization described by a key=value config file.
    Solve {
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check unknown and interface counts against the reference grids.
    CheckTables,
    /// Run the quick property suite on small problems.
    Props {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn report(lines: &[CheckOutcome]) -> ExitCode {
    for l in lines {
        println!("{l}");
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    println!("{} checks, {} failed", lines.len(), failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn solve(config: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(o) = out {
        cfg.out = o;
    }
    match run_experiment(&cfg) {
        Ok(rep) => {
            let s = Summary::from_result(&rep.result);
            println!(
                "{} ny={} N={}: avg GMRES {} ({}), total {}",
                cfg.solver.precond,
                cfg.ny,
                cfg.n_sub,
                s.avg_gmres_str(),
                s.newton_count,
                s.total_gmres
            );
            println!("wrote {}", cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("solver failed: {e}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config, out } => solve(config, out),
        Command::CheckTables => match table_accounting() {
            Ok(lines) => report(&lines),
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_SOLVER)
            }
        },
        Command::Props { seed } => match property_suite(seed) {
            Ok(lines) => report(&lines),
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_SOLVER)
            }
        },
    }
}
