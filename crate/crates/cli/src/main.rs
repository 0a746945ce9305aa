use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;

use sardespeckle_cli::cli::Cli;
use sardespeckle_cli::error::{CliError, ErrorKind};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::new(ErrorKind::Usage, first).line());
            eprint!("{rendered}");
            return ExitCode::from(ErrorKind::Usage.exit_code() as u8);
        }
    };
    match sardespeckle_cli::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.line());
            ExitCode::from(err.kind.exit_code() as u8)
        }
    }
}
