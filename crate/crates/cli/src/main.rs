use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fracheat_cli::commands::Command;
use fracheat_cli::{execute, load_config, thread_budget, CliError, Overrides};

#[derive(Debug, Parser)]
#[command(name = "fracheat", version, about = "Stochastic fractional heat equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; wins over FRACHEAT_THREADS and the file.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// CSV destination; a `.summary.json` is written beside it. Stdout otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        threads: cli.threads.map(|n| n as usize),
        out: cli.out,
    };
    let cfg = load_config(cli.config.as_deref(), &overrides)?;
    let threads = thread_budget(overrides.threads, &cfg)?;
    execute(cli.command, &cfg, threads)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracheat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
