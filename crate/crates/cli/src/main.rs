use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use colf::stream::write_stream;

mod config;
mod files;
mod report;
mod run;

/// Failure classes mapped onto exit codes.
pub enum Failure {
    Config(anyhow::Error),
    Refused(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Refused(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Refused(e) | Failure::Runtime(e) => e,
        }
    }
}

#[derive(Parser)]
#[command(name = "colf", version, about = "Continual learning for CTR prediction on drifting click streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic click stream and write it to a file.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (strategy, seed) cell of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace results already in the output directory.
        #[arg(long)]
        force: bool,
        /// Worker threads for independent cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize a results directory and write figure data.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn cmd_gen(config_path: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = config::load_stream_config(config_path).map_err(Failure::Config)?;
    let generated = colf::generate_stream(&cfg).map_err(|e| Failure::Config(anyhow!(e)))?;
    let stream = generated.stream;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(Failure::Runtime)?;
    }
    write_stream(&stream, out)
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(Failure::Runtime)?;
    println!("day\tsamples\titems\tclick_rate");
    for d in &stream.days {
        let items: BTreeSet<u32> = d.samples.iter().map(|s| s.item_id).collect();
        println!("{}\t{}\t{}\t{:.4}", d.day, d.len(), items.len(), d.click_rate());
    }
    eprintln!("wrote {} days ({} records) to {}", stream.n_days(), stream.n_samples(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen { config, out } => cmd_gen(config, out),
        Command::Run { config, force, jobs } => run::cmd_run(config, *force, *jobs),
        Command::Report { dir } => report::cmd_report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
