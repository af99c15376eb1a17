use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use washgap_cli::pipeline::{execute, Command, EXIT_VALIDATION};
use washgap_cli::{RunConfig, StageStatus};

#[derive(Parser)]
#[command(
    name = "washgap",
    version,
    about = "Signal-gap index and household adoption pipeline"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Run configuration (TOML). Without it the datagen defaults are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides WASHGAP_OUT and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker cap (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Write a synthetic input bundle to <out>/data.
    Generate,
    /// Check the inputs and write the cleaned household table.
    Validate,
    /// Build the index, attach it to households, and report the trend.
    Index,
    /// Baseline logit and ordered logit.
    Fit,
    /// Mediation system with bootstrap intervals.
    Mediate,
    /// Interaction model, split comparison and heterogeneity battery.
    Moderate,
    /// Two-stage least squares.
    Iv,
    /// Counterfactual scenarios and sensitivity.
    Simulate,
    /// Every stage in order.
    Run,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Generate => Command::Generate,
            Cmd::Validate => Command::Validate,
            Cmd::Index => Command::Index,
            Cmd::Fit => Command::Fit,
            Cmd::Mediate => Command::Mediate,
            Cmd::Moderate => Command::Moderate,
            Cmd::Iv => Command::Iv,
            Cmd::Simulate => Command::Simulate,
            Cmd::Run => Command::Run,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command::from(cli.cmd);
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION as u8);
            }
        },
        None => RunConfig::synthetic(1),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    let out = cfg.resolve_out(cli.out.as_deref());
    let (m, code) = washgap::par::with_threads(cli.threads, || execute(cmd, &cfg, &out));
    for s in &m.stages {
        let status = match s.status {
            StageStatus::Ok => "ok",
            StageStatus::Failed => "FAILED",
            StageStatus::Skipped => "skipped",
            StageStatus::Disabled => "disabled",
        };
        match &s.message {
            Some(msg) => eprintln!("{:<10} {status:<9} {msg}", s.name),
            None => eprintln!("{:<10} {status}", s.name),
        }
    }
    eprintln!("outputs in {}", out.display());
    ExitCode::from(code as u8)
}
