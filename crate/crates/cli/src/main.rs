use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use pvflex::ErrorClass;
use pvflex_cli::{error_json, exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json(ErrorClass::Config, e.render().to_string().trim()));
            return ExitCode::from(exit_code(ErrorClass::Config) as u8);
        }
    };
    match run(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            eprintln!("{}", error_json(class, &e.to_string()));
            ExitCode::from(exit_code(class) as u8)
        }
    }
}
