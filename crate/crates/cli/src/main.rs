use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = retinode_cli::Cli::parse();
    match retinode_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
