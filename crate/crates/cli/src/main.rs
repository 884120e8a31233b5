mod args;
mod commands;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use commands::UsageError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = commands::run(cli) {
        eprintln!("error: {err:#}");
        let code = if err.downcast_ref::<UsageError>().is_some() { 1 } else { 2 };
        std::process::exit(code);
    }
}
