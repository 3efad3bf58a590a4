use std::process::ExitCode;

use anyhow::Context;
use async_heat::cli::{self, Cli, CliError};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (code, kind) = err
                .downcast_ref::<CliError>()
                .map_or((1, "internal"), |e| (e.exit_code(), e.kind()));
            let msg = serde_json::json!({
                "error": kind,
                "exit_code": code,
                "message": format!("{err:#}"),
            });
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<String> {
    let name = cli.command.name();
    cli::execute(cli).with_context(|| format!("{name} failed"))
}
