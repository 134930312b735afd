use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qagg_cli::{cmd_aggregate, cmd_bench, cmd_validate, AggregateArgs, BenchArgs, CliError, ValidateArgs};
use tracing_subscriber::EnvFilter;

/// Q-aggregation of ordered linear smoothers.
#[derive(Debug, Parser)]
#[command(name = "qagg", version)]
struct Cli {
    /// Worker threads for Monte Carlo replicates (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a ridge/Tikhonov path on user data.
    Aggregate(AggregateArgs),
    /// Run a Monte Carlo regret experiment from a config file.
    Bench(BenchArgs),
    /// Check the ordered-smoother axioms on a list of matrices.
    Validate(ValidateArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::input("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::input("--threads", e))?;
    }
    match cli.command {
        Command::Aggregate(args) => {
            let out = cmd_aggregate(&args)?;
            println!(
                "converged in {} iterations, objective {}, written to {}",
                out.iterations,
                out.objective,
                args.output.display()
            );
        }
        Command::Bench(args) => {
            let reports = cmd_bench(&args)?;
            for r in &reports {
                for s in &r.methods {
                    println!(
                        "M={:<5} q={:<3} {:<12} regret {:>9.4} ± {:.4}  paired {:>9.4} ± {:.4}",
                        r.m, r.q, s.method, s.regret, s.regret_ci, s.paired_regret, s.paired_ci
                    );
                }
            }
        }
        Command::Validate(args) => {
            cmd_validate(&args, &mut std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
