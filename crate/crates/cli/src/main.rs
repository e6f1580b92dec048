mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Failure;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match &cli.command {
        Command::Encrypt(a) => commands::encrypt(a),
        Command::Keysched(a) => commands::keysched(a),
        Command::Sim(a) => commands::sim(a),
        Command::Sema(a) => commands::sema(a),
        Command::Filter(a) => commands::filter(a),
        Command::Attack(a) => commands::attack(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
