use std::process::ExitCode;

use clap::Parser;
use regio_forecast_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGIO_FORECAST_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("regio-forecast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
