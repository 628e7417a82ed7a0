mod args;
mod error;
mod evaluate;
mod manifest;
mod patterns;
mod reconstruct;
mod simulate;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliResult, Failure, EXIT_USAGE};

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::usage)?;
    }
    if cli.config.is_some() && !matches!(cli.command, Command::Reconstruct(_)) {
        return Err(Failure::usage("--config applies to `reconstruct` only"));
    }
    match &cli.command {
        Command::Simulate(a) => simulate::run(a, cli.seed),
        Command::Reconstruct(a) => reconstruct::run(a, cli.config.as_deref(), cli.seed),
        Command::Evaluate(a) => evaluate::run(a, cli.seed),
        Command::Patterns(a) => patterns::run(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
