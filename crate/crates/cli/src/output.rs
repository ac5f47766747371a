//! Artifact files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::Outcome;
use crate::config::{Command, RunConfig};
use crate::error::CliError;

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to rerun: the effective config, its source hash and the seed.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'static str,
    pub seed: u64,
    pub config_path: String,
    pub config_sha256: String,
    pub config: &'a RunConfig,
    pub strict_grid: bool,
    pub version: &'static str,
    pub parallel_feature: bool,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<Artifact>,
    pub pass: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<Artifact, CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(Artifact { file: name.to_string(), sha256: sha256_hex(bytes) })
}

pub struct RunInfo<'a> {
    pub command: Command,
    pub config: &'a RunConfig,
    pub config_path: PathBuf,
    pub config_bytes: &'a [u8],
    pub strict_grid: bool,
    pub started_unix: u64,
}

pub fn write_all(dir: &Path, info: &RunInfo<'_>, outcome: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let mut outputs = vec![write(dir, REPORT_FILE, &outcome.report)?];
    let summary = serde_json::to_vec_pretty(&outcome.summary)?;
    outputs.push(write(dir, SUMMARY_FILE, &summary)?);
    if let Some(model) = &outcome.model {
        outputs.push(write(dir, MODEL_FILE, model.to_json()?.as_bytes())?);
    }
    let manifest = Manifest {
        command: info.command.name(),
        seed: info.config.seed,
        config_path: info.config_path.display().to_string(),
        config_sha256: sha256_hex(info.config_bytes),
        config: info.config,
        strict_grid: info.strict_grid,
        version: env!("CARGO_PKG_VERSION"),
        parallel_feature: cfg!(feature = "parallel"),
        started_unix: info.started_unix,
        finished_unix: unix_now(),
        outputs,
        pass: outcome.failure.is_none(),
    };
    write(dir, MANIFEST_FILE, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
