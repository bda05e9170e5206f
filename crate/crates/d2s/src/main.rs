use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use d2s::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.report).expect("reports are plain JSON");
            let mut out = std::io::stdout().lock();
            if writeln!(out, "{text}").is_err() {
                return ExitCode::FAILURE;
            }
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("d2s: checks failed");
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("d2s: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
