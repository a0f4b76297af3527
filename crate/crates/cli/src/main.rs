use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use instadep::theory::theory_report;
use instadep_cli::{run, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "instadep", version, about = "Lagged vs instantaneous model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Print the numerical theory checks as JSON.
    TheoryReport {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        n_mc: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { config } => ExperimentConfig::load(&config).map(|_| {
            println!("{}: ok", config.display());
        }).map_err(anyhow::Error::from),
        Command::Run { config } => match ExperimentConfig::load(&config) {
            Err(e) => Err(e.into()),
            Ok(cfg) => run(&cfg).map(|files| {
                for f in files {
                    println!("{}", f.display());
                }
            }),
        },
        Command::TheoryReport { seed, n_mc, out } => theory(seed, n_mc, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn theory(seed: u64, n_mc: usize, out: Option<PathBuf>) -> anyhow::Result<()> {
    if n_mc < 2 {
        return Err(ConfigError { line: None, message: "--n-mc must be at least 2".into() }.into());
    }
    let report = theory_report(seed, n_mc)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(path) => std::fs::write(&path, text)?,
        None => print!("{text}"),
    }
    if !report.all_pass() {
        eprintln!("warning: some checks failed");
    }
    Ok(())
}
