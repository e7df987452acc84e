use std::process::ExitCode;

use clap::Parser;
use sebrake::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            print!("{}", report.text);
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            if report.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
