use std::process::ExitCode;

use clap::Parser;
use tbdoa::cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok((echo, outcome)) => {
            if let Some(text) = echo {
                print!("{text}");
            }
            for line in &outcome.stdout {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err((record, code)) => {
            eprintln!("{}", record.to_json());
            ExitCode::from(code as u8)
        }
    }
}
