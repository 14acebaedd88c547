mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "spectok", version, about = "Specialized-token ViT experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parameter and FLOPs deltas against the unspecialized model.
    Count(Common),
    /// Per-block similarity statistics and PCA renderings.
    Probe(Common),
    /// Train on the toy quadrant task.
    Train(Common),
    /// Central-difference check of the training gradients.
    Gradcheck(Common),
    /// The synthetic LayerNorm separation demo.
    LnDemo(Common),
}

#[derive(clap::Args)]
struct Common {
    /// JSON run config; `{}` is a valid config.
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set train.steps=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&config::RunConfig) -> commands::Outcome) = match &cli.command {
        Command::Count(c) => (c, commands::count),
        Command::Probe(c) => (c, commands::probe),
        Command::Train(c) => (c, commands::train),
        Command::Gradcheck(c) => (c, commands::gradcheck),
        Command::LnDemo(c) => (c, commands::ln_demo),
    };
    let cfg = match config::load(&common.config, &common.sets) {
        Ok(c) => c,
        Err(config::LoadError::Io(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(commands::EXIT_IO);
        }
        Err(config::LoadError::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(commands::EXIT_CONFIG);
        }
    };
    ExitCode::from(run(&cfg).report())
}
