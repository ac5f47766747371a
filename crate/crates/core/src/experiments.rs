//! Training-validation model selection and learning-rate experiments.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::ConditionalGrid;
use crate::distributions::{ConditionalModel, LpExponent};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::{
    cross_gram, gram_with, least_squares_line, spectrum_decay, uniform_inputs, DecayEstimate, KernelSpec,
};
use crate::loss::{clip, empirical_risk_of_predictions, Dataset, Tau};
use crate::quadrature::XQuadrature;
use crate::report::fmt_f64;
use crate::seed::derive_seed;
use crate::solver::{DualProblem, SolveDiagnostics, SolverOptions, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    /// `{i/n² : i = 1..n²}`.
    StrictNet,
    /// `{2^{−j} : j = 0..⌈2 log₂ n⌉}`.
    #[default]
    Geometric,
}

/// Candidate regularization parameters in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
    mode: Option<GridMode>,
}

impl LambdaGrid {
    /// An arbitrary grid; values are sorted descending and deduplicated.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::invalid("lambda grid values must lie in (0, 1]"));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        values.dedup();
        Ok(LambdaGrid { values, mode: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> Option<GridMode> {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn lambda_grid(n: usize, mode: GridMode) -> Result<LambdaGrid> {
    if n < 3 {
        return Err(Error::invalid(format!("lambda grid needs n ≥ 3, got {n}")));
    }
    let values = match mode {
        GridMode::StrictNet => {
            let m = n * n;
            (1..=m).rev().map(|i| i as f64 / m as f64).collect()
        }
        GridMode::Geometric => {
            let top = (2.0 * (n as f64).log2()).ceil() as i32;
            (0..=top).map(|j| 2f64.powi(-j)).collect()
        }
    };
    Ok(LambdaGrid { values, mode: Some(mode) })
}

/// Outcome of training-validation selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSvmResult {
    /// Model trained on the first split for the chosen `λ`; evaluate with
    /// [`SvmModel::predict_clipped`].
    pub model: SvmModel,
    pub lambda: f64,
    /// `(λ, validation risk of the clipped predictor)` in grid order.
    pub validation: Vec<(f64, f64)>,
    pub diagnostics: SolveDiagnostics,
    /// Number of grid points whose training run did not converge.
    pub unconverged: usize,
}

/// Size of the training split, `⌊n/2⌋ + 1`.
pub fn training_split_size(n: usize) -> usize {
    n / 2 + 1
}

/// Trains on the first `⌊n/2⌋+1` points for every `λ` and picks the one with the
/// smallest clipped validation risk on the rest; ties go to the smaller `λ`.
pub fn tv_svm(
    data: &Dataset,
    spec: &KernelSpec,
    grid: &LambdaGrid,
    tau: Tau,
    opts: &SolverOptions,
) -> Result<TvSvmResult> {
    tv_svm_with(data, spec, grid, tau, opts, Execution::default())
}

pub fn tv_svm_with(
    data: &Dataset,
    spec: &KernelSpec,
    grid: &LambdaGrid,
    tau: Tau,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<TvSvmResult> {
    if data.len() < 3 {
        return Err(Error::invalid(format!("tv_svm needs at least 3 points, got {}", data.len())));
    }
    let (train, valid) = data.split_at(training_split_size(data.len()))?;
    let dim = data.dim();
    let g = gram_with(spec, train.xs_flat(), dim, exec)?;
    let k_valid = cross_gram(spec, valid.xs_flat(), train.xs_flat(), dim, exec);
    let mut problem = DualProblem::new_unchecked(g, train.ys().to_vec(), grid.values()[0], tau)?;

    let mut best: Option<(f64, f64, Vec<f64>, SolveDiagnostics)> = None;
    let mut validation = Vec::with_capacity(grid.len());
    let mut unconverged = 0;
    let mut warm: Option<Vec<f64>> = None;
    let mut prev_bounds = problem.bounds();
    for &lambda in grid.values() {
        problem = problem.with_lambda(lambda)?;
        let (lo, hi) = problem.bounds();
        // Coefficients at a bound move with the bound.
        let start = warm.as_ref().map(|w| {
            w.iter()
                .map(|&a| {
                    if a == prev_bounds.1 {
                        hi
                    } else if a == prev_bounds.0 {
                        lo
                    } else {
                        a
                    }
                })
                .collect::<Vec<f64>>()
        });
        let (alpha, diag) = problem.solve(start.as_deref(), opts)?;
        if !diag.converged {
            unconverged += 1;
        }
        let preds: Vec<f64> =
            (&k_valid * nalgebra::DVector::from_column_slice(&alpha)).iter().map(|&t| clip(t)).collect();
        let risk = empirical_risk_of_predictions(tau, valid.ys(), &preds)?;
        validation.push((lambda, risk));
        let better = match &best {
            None => true,
            Some((bl, br, _, _)) => risk < *br || (risk == *br && lambda < *bl),
        };
        if better {
            best = Some((lambda, risk, alpha.clone(), diag));
        }
        warm = Some(alpha);
        prev_bounds = (lo, hi);
    }
    let (lambda, _, alpha, diagnostics) = best.expect("grid is nonempty");
    let model = SvmModel { alpha, ..SvmModel::zero(&train, *spec, lambda, tau) };
    Ok(TvSvmResult { model, lambda, validation, diagnostics, unconverged })
}

/// `γ = min{β/(β(2−ϑ+ϱϑ−ϱ)+ϱ), 2β/(β+1)}`.
pub fn theoretical_gamma(beta: f64, theta: f64, rho: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) || !(0.0..=1.0).contains(&theta) || !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("need β ∈ (0,1], ϑ ∈ [0,1], ϱ ∈ (0,1); got β={beta}, ϑ={theta}, ϱ={rho}")));
    }
    let first = beta / (beta * (2.0 - theta + rho * theta - rho) + rho);
    Ok(first.min(2.0 * beta / (beta + 1.0)))
}

/// `ϑ = min{2/q, p/(p+1)}`.
pub fn theoretical_theta(p: LpExponent, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::invalid(format!("q must be at least 1, got {q}")));
    }
    Ok((2.0 / q).min(p.holder_ratio()))
}

/// Where the capacity exponent `ϱ` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RhoSource {
    Fixed {
        rho: f64,
    },
    /// Spectrum fit of the kernel on this many uniform inputs.
    Estimated {
        points: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub model: ConditionalModel,
    pub kernel: KernelSpec,
    pub tau: Tau,
    pub sample_sizes: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub beta: f64,
    pub p: LpExponent,
    pub q: f64,
    pub rho: RhoSource,
    pub grid: GridMode,
    pub solver: SolverOptions,
    /// Gauss–Legendre order and number of panels along `x₁` for risk evaluation.
    pub quadrature_order: usize,
    pub quadrature_panels: usize,
}

impl RateConfig {
    pub fn new(model: ConditionalModel, kernel: KernelSpec, tau: Tau, sample_sizes: Vec<usize>) -> Self {
        RateConfig {
            model,
            kernel,
            tau,
            sample_sizes,
            repetitions: 20,
            seed: 1,
            beta: 1.0,
            p: LpExponent::Infinite,
            q: 2.0,
            rho: RhoSource::Estimated { points: 500 },
            grid: GridMode::Geometric,
            solver: SolverOptions { tol: 1e-6, max_epochs: 1_000, ..Default::default() },
            quadrature_order: 32,
            quadrature_panels: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.solver.validate()?;
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 4) {
            return Err(Error::invalid("sample sizes must be nonempty and each at least 4"));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be positive"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid(format!("β must lie in (0, 1], got {}", self.beta)));
        }
        if self.quadrature_order == 0 || self.quadrature_panels == 0 {
            return Err(Error::invalid("quadrature order and panels must be positive"));
        }
        theoretical_theta(self.p, self.q)?;
        match self.rho {
            RhoSource::Fixed { rho } if !(rho > 0.0 && rho < 1.0) => {
                Err(Error::invalid(format!("ϱ must lie in (0, 1), got {rho}")))
            }
            RhoSource::Estimated { points } if points < 20 => {
                Err(Error::invalid("spectrum estimate needs at least 20 points"))
            }
            _ => Ok(()),
        }
    }
}

/// One `(n, repetition)` work item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub rep: usize,
    pub lambda: f64,
    pub excess_risk: f64,
    pub dist_norm: f64,
    pub converged: bool,
}

/// Means over the converged repetitions at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummaryRow {
    pub n: usize,
    pub mean_excess_risk: f64,
    pub mean_dist_norm: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub summary: Vec<RateSummaryRow>,
    pub excess_slope: Option<f64>,
    pub dist_slope: Option<f64>,
    pub r: f64,
    pub theta: f64,
    pub rho: f64,
    pub rho_estimate: Option<DecayEstimate>,
    pub theoretical_gamma: f64,
    pub theoretical_gamma_over_q: f64,
}

impl RateReport {
    /// Columns `n, rep, lambda_chosen, excess_risk, dist_norm, converged`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,rep,lambda_chosen,excess_risk,dist_norm,converged")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.n,
                r.rep,
                fmt_f64(r.lambda),
                fmt_f64(r.excess_risk),
                fmt_f64(r.dist_norm),
                r.converged
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ln y` against `ln n`; `None` with fewer than 3 distinct `n`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 3 || points.iter().any(|&(n, y)| !(n > 0.0 && y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, y)| (n.ln(), y.ln())).collect();
    Some(least_squares_line(&logs).0)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn learning_rate_experiment(config: &RateConfig) -> Result<RateReport> {
    learning_rate_experiment_with(config, Execution::default())
}

pub fn learning_rate_experiment_with(config: &RateConfig, exec: Execution) -> Result<RateReport> {
    config.validate()?;
    let dim = config.model.dim();
    let theta = theoretical_theta(config.p, config.q)?;
    let r = config.p.holder_ratio() * config.q;
    let (rho, rho_estimate) = match config.rho {
        RhoSource::Fixed { rho } => (rho, None),
        RhoSource::Estimated { points } => {
            let xs = uniform_inputs(points, dim, derive_seed(config.seed, &["rates", "spectrum"]));
            let est = spectrum_decay(&config.kernel, &xs, dim)?;
            (est.rho_hat, Some(est))
        }
    };
    let gamma = theoretical_gamma(config.beta, theta, rho)?;

    let quad = XQuadrature::composite(dim, config.quadrature_order, config.quadrature_panels)?;
    let nodes: Vec<f64> = quad.iter().flat_map(|(x, _)| x.iter().copied()).collect();
    let grid_eval = ConditionalGrid::new(&config.model, config.tau, quad)?;

    let mut sizes = config.sample_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let items: Vec<(usize, usize)> =
        sizes.iter().flat_map(|&n| (0..config.repetitions).map(move |rep| (n, rep))).collect();
    // Work items run in parallel; each solve inside is sequential.
    let rows = exec.map_slice(&items, |&(n, rep)| -> Result<RateRow> {
        let seed = derive_seed(config.seed, &["rates", &n.to_string(), &rep.to_string()]);
        let data = config.model.sample_joint(n, seed)?;
        let grid = lambda_grid(n, config.grid)?;
        let opts = SolverOptions { seed, ..config.solver };
        let fit = tv_svm_with(&data, &config.kernel, &grid, config.tau, &opts, Execution::Sequential)?;
        let k = cross_gram(&config.kernel, &nodes, &fit.model.support, dim, Execution::Sequential);
        let fx: Vec<f64> =
            (k * nalgebra::DVector::from_column_slice(&fit.model.alpha)).iter().map(|&t| clip(t)).collect();
        Ok(RateRow {
            n,
            rep,
            lambda: fit.lambda,
            excess_risk: grid_eval.excess_risk_values(&fx),
            dist_norm: grid_eval.dist_norm_values(&fx, LpExponent::Finite(r)),
            converged: fit.diagnostics.converged,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let summary: Vec<RateSummaryRow> = sizes
        .iter()
        .map(|&n| {
            let ok: Vec<&RateRow> = rows.iter().filter(|r| r.n == n && r.converged).collect();
            let k = ok.len().max(1) as f64;
            RateSummaryRow {
                n,
                mean_excess_risk: if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r.excess_risk).sum::<f64>() / k
                },
                mean_dist_norm: if ok.is_empty() { f64::NAN } else { ok.iter().map(|r| r.dist_norm).sum::<f64>() / k },
                repetitions: ok.len(),
            }
        })
        .collect();
    let usable: Vec<&RateSummaryRow> = summary.iter().filter(|s| s.repetitions > 0).collect();
    let excess_slope = fit_loglog_slope(&usable.iter().map(|s| (s.n as f64, s.mean_excess_risk)).collect::<Vec<_>>());
    let dist_slope = fit_loglog_slope(&usable.iter().map(|s| (s.n as f64, s.mean_dist_norm)).collect::<Vec<_>>());
    Ok(RateReport {
        rows,
        summary,
        excess_slope,
        dist_slope,
        r,
        theta,
        rho,
        rho_estimate,
        theoretical_gamma: gamma,
        theoretical_gamma_over_q: gamma / config.q,
    })
}
