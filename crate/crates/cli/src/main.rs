use std::io::Write;

use clap::Parser;
use ssctm_cli::{execute, Command};

/// Ramp metering under Markov-switching capacities.
#[derive(Parser)]
#[command(name = "ssctm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(outcome) => {
            // A closed pipe on stdout is not an error worth reporting.
            let mut out = std::io::stdout().lock();
            if let Some(m) = &outcome.message {
                let _ = writeln!(out, "{m}");
            }
            let _ = writeln!(out, "wrote {} files to {}", outcome.files.len() + 1, outcome.out_dir.display());
            std::process::exit(outcome.exit_code);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
