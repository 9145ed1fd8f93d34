use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use episodic_al::experiment::{self, RunConfig, OUTPUT_DIR_ENV};
use episodic_al::Error;

#[derive(Parser)]
#[command(version, about = "Episode-based active learning with MC-dropout CNNs")]
struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (strategy, trial) pair and write CSV and SVG reports.
    #[command(after_help = format!("The output directory can be overridden with {OUTPUT_DIR_ENV}."))]
    Run { config: PathBuf },
    /// Check a config file and list every invalid field.
    Validate { config: PathBuf },
    /// Repeat the run for several acquisition thresholds.
    Sweep {
        config: PathBuf,
        /// Comma-separated thresholds; defaults to the config's theta_sweep.
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
    },
}

fn load(path: &PathBuf) -> Result<RunConfig, Error> {
    RunConfig::from_file(path)?.validated()
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(Error::Config(diags)) => {
                for d in &diags {
                    println!("{d}");
                }
                ExitCode::from(2)
            }
            Err(e) => fail(&e),
        },
        Command::Run { config } => {
            let result = load(&config).and_then(|cfg| experiment::run(&cfg, cli.quiet));
            match result {
                Ok((_, files)) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep { config, theta } => {
            let result = load(&config).and_then(|cfg| experiment::sweep(&cfg, &theta, cli.quiet));
            match result {
                Ok((_, files)) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
