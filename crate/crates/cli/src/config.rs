//! Run configuration: a TOML document with one section per component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qsvm_core::distributions::{LpExponent, ModelSpec};
use qsvm_core::exec::Execution;
use qsvm_core::experiments::{GridMode, RhoSource};
use qsvm_core::kernels::KernelSpec;
use qsvm_core::solver::SolverOptions;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckInnerRisk,
    CheckCalibration,
    CheckVariance,
    Train,
    TvSvm,
    Rates,
    Spectrum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckInnerRisk => "check-inner-risk",
            Command::CheckCalibration => "check-calibration",
            Command::CheckVariance => "check-variance",
            Command::Train => "train",
            Command::TvSvm => "tv-svm",
            Command::Rates => "rates",
            Command::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub execution: Execution,
    pub model: Option<ModelSpec>,
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    pub data: Option<DataSection>,
    pub inner_risk: Option<InnerRiskSection>,
    pub calibration: Option<CalibrationSection>,
    pub train: Option<TrainSection>,
    pub tv_svm: Option<TvSvmSection>,
    pub rates: Option<RatesSection>,
    pub spectrum: Option<SpectrumSection>,
}

/// Training data: `n` draws from `[model]`, or a CSV file with columns `x1..xd, y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n: Option<usize>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerRiskSection {
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_eps_points")]
    pub eps_points: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub tau: f64,
    pub p: LpExponent,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub tau: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvSvmSection {
    pub tau: f64,
    #[serde(default)]
    pub grid: GridMode,
    /// Explicit grid; overrides `grid`.
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub tau: f64,
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_p")]
    pub p: LpExponent,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_rho")]
    pub rho: RhoSource,
    #[serde(default)]
    pub grid: GridMode,
    #[serde(default = "default_rate_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_rate_panels")]
    pub quadrature_panels: usize,
    /// Solver settings for the rate experiment; `[solver]` is not used here.
    #[serde(default = "default_rate_solver")]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default = "default_spectrum_points")]
    pub points: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_taus() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}
fn default_points() -> usize {
    20
}
fn default_eps_points() -> usize {
    101
}
fn default_tolerance() -> f64 {
    qsvm_core::calibration::DEFAULT_SLACK_TOLERANCE
}
fn default_cells() -> usize {
    8
}
fn default_count() -> usize {
    1000
}
fn default_order() -> usize {
    qsvm_core::quadrature::DEFAULT_ORDER
}
fn default_repetitions() -> usize {
    20
}
fn default_beta() -> f64 {
    1.0
}
fn default_p() -> LpExponent {
    LpExponent::Infinite
}
fn default_q() -> f64 {
    2.0
}
fn default_rho() -> RhoSource {
    RhoSource::Estimated { points: 500 }
}
fn default_rate_order() -> usize {
    32
}
fn default_rate_panels() -> usize {
    16
}
fn default_rate_solver() -> SolverOptions {
    SolverOptions { tol: 1e-6, max_epochs: 1_000, ..Default::default() }
}
fn default_spectrum_points() -> usize {
    500
}
fn default_dim() -> usize {
    1
}

impl Default for InnerRiskSection {
    fn default() -> Self {
        InnerRiskSection {
            taus: default_taus(),
            points: default_points(),
            eps_points: default_eps_points(),
            tolerance: default_tolerance(),
        }
    }
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { points: default_spectrum_points(), dim: default_dim() }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Config { path: origin.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: format!("config is not valid UTF-8: {e}"),
        })?;
        let cfg = Self::parse(text, path)?;
        Ok((cfg, bytes))
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| CliError::Missing(name.to_string()))
    }
}
