use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = avgflow_cli::Cli::parse();
    match avgflow_cli::execute(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
