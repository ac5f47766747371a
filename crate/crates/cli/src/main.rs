//! `qsvm`: pinball-loss calibration checks, kernel quantile SVM training and
//! learning-rate experiments driven by a TOML config.
//!
//! Exit status is 0 on success, 1 when a check finds a violation and 2 on
//! configuration or usage errors.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Overrides;
use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::output::RunInfo;

#[derive(Debug, Parser)]
#[command(name = "qsvm", version, about = "Quantile SVM calibration checks and rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Check the self-calibration function against its polynomial lower bound.
    CheckInnerRisk(Common),
    /// Check the self-calibration inequality on random test functions.
    CheckCalibration(Common),
    /// Check the variance bound on random test functions.
    CheckVariance(Common),
    /// Train one SVM at a fixed λ.
    Train(Common),
    /// Train over a λ grid and select by validation risk.
    TvSvm(Common),
    /// Run the learning-rate experiment.
    Rates(Common),
    /// Fit the eigenvalue decay of a kernel Gram matrix.
    Spectrum(Common),
    /// Run the command named by `command` in the config.
    Run(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the strict λ net `{i/n²}` instead of the configured grid.
    #[arg(long)]
    strict_grid: bool,
}

impl Sub {
    fn split(self) -> (Option<Command>, Common) {
        match self {
            Sub::CheckInnerRisk(c) => (Some(Command::CheckInnerRisk), c),
            Sub::CheckCalibration(c) => (Some(Command::CheckCalibration), c),
            Sub::CheckVariance(c) => (Some(Command::CheckVariance), c),
            Sub::Train(c) => (Some(Command::Train), c),
            Sub::TvSvm(c) => (Some(Command::TvSvm), c),
            Sub::Rates(c) => (Some(Command::Rates), c),
            Sub::Spectrum(c) => (Some(Command::Spectrum), c),
            Sub::Run(c) => (None, c),
        }
    }
}

enum Status {
    Pass,
    Fail(String),
}

fn execute(sub: Sub) -> Result<Status, CliError> {
    let started_unix = output::unix_now();
    let (requested, common) = sub.split();
    let (mut cfg, bytes) = RunConfig::load(&common.config)?;
    let command = match (requested, cfg.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Usage(format!(
                "subcommand `{}` conflicts with command = \"{}\" in {}",
                a.name(),
                b.name(),
                common.config.display()
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(CliError::Usage(format!("{} does not set `command`", common.config.display()))),
    };
    cfg.command = Some(command);
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = common.out {
        cfg.out = Some(out);
    }
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("qsvm-out"));

    let outcome = commands::run(command, &cfg, &Overrides { strict_grid: common.strict_grid })?;
    let info = RunInfo {
        command,
        config: &cfg,
        config_path: common.config,
        config_bytes: &bytes,
        strict_grid: common.strict_grid,
        started_unix,
    };
    output::write_all(&out_dir, &info, &outcome)?;
    Ok(match outcome.failure {
        None => Status::Pass,
        Some(msg) => Status::Fail(msg),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
