use std::process::ExitCode;

use clap::Parser;
use trackuq::app::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) if manifest.complete => ExitCode::SUCCESS,
        Ok(manifest) => {
            for f in &manifest.failures {
                let method = f.method.as_deref().unwrap_or("MAP");
                eprintln!("pair {} ({method}): {}", f.pair, f.error);
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
