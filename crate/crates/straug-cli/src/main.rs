mod cli;
mod commands;
mod config;

use clap::Parser as _;

use cli::{Cli, Command};
use commands::UsageError;
use config::RunConfig;

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => {
            if !path.is_file() {
                return Err(commands::usage(format!(
                    "config {} is not a file",
                    path.display()
                )));
            }
            RunConfig::load(path).map_err(|e| commands::usage(format!("{e:#}")))?
        }
        None => RunConfig::default(),
    };
    if cli.verbose {
        eprintln!("config: {config:?}");
    }
    match cli.command {
        Command::BuildMemory(args) => commands::build_memory_cmd(args, &config),
        Command::Augment(args) => commands::augment_cmd(args, &config),
        Command::Translate(args) => commands::translate_cmd(args, &config),
        Command::Materialize(args) => commands::materialize_cmd(args, &config),
        Command::Featurize(args) => commands::featurize_cmd(args, &config),
        Command::Stats(args) => commands::stats_cmd(args),
        Command::Validate(args) => commands::validate_cmd(args, &config),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(error) if error.is::<UsageError>() => {
            eprintln!("error: {error}");
            std::process::exit(2);
        }
        Err(error) => {
            eprintln!("error: {error:#}");
            std::process::exit(1);
        }
    }
}
