use std::process::ExitCode;

use clap::Parser;
use indiff::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command.into_config().and_then(|cfg| indiff::run(&cfg)) {
        Ok(a) => {
            println!("{}", a.csv.display());
            println!("{}", a.json.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}
