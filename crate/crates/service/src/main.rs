use std::process::ExitCode;

use clap::Parser;
use hydrotwin_service::cli::{self, Cli, Command};
use hydrotwin_service::config::ServiceConfig;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = ServiceConfig::load(cli.config.as_deref()).and_then(|config| match cli.command {
        Command::Serve => {
            let port = cli::port_from_env()?;
            tokio::runtime::Runtime::new()?.block_on(cli::serve(&cli.data_dir, config, port))
        }
        _ => cli::run(&cli, &config).map(|out| {
            print!("{}", out.json);
            if let Some(s) = out.summary {
                eprint!("{s}");
            }
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hydrotwin: {e}");
            ExitCode::FAILURE
        }
    }
}
