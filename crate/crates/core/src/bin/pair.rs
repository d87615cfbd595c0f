use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use pair_reward::cli::{run, Cli};
use pair_reward::error::ErrorCategory;

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: {}: {}", ErrorCategory::Config.as_str(), one_line(first));
            return ExitCode::from(ErrorCategory::Config.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error: {}: {}", cat.as_str(), one_line(&e.to_string()));
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
