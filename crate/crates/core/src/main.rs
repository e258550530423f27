use std::io::{self, Write};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use phoneagent::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let stdin = io::stdin();
    let mut stdout = io::stdout();
    match run(&cli, &mut stdin.lock(), &mut stdout) {
        Ok(()) => {
            let _ = stdout.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            let err = Err::<(), _>(e).context("phoneagent failed").unwrap_err();
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
