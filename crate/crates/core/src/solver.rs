//! Regularized pinball-loss SVM without offset.
//!
//! Minimizes `λ‖f‖²_H + (1/n) Σ L_τ(yᵢ, f(xᵢ))` over `f = Σ αᵢ k(xᵢ, ·)`.
//! The dual is the box-constrained quadratic program
//!
//! ```text
//! minimize ½ αᵀGα − αᵀy   subject to   −(1−τ)/(2λn) ≤ αᵢ ≤ τ/(2λn)
//! ```
//!
//! whose value relates to the primal optimum by `P* = −2λ · min`. It is solved
//! by coordinate descent. Epochs alternate between a sweep in random order and
//! `n` greedy steps on the coordinate with the largest decrease, and each
//! epoch ends with a projected Newton step on the free variables.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::{cross_gram, gram_with, sorted_eigenvalues, KernelSpec, PSD_TOLERANCE};
use crate::loss::{clip, empirical_risk_of_predictions, pinball_loss, Dataset, Tau};

/// A trained kernel expansion `f(x) = Σ αᵢ k(xᵢ, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub tau: Tau,
    pub dim: usize,
    /// Row-major training inputs.
    pub support: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl SvmModel {
    pub fn zero(data: &Dataset, kernel: KernelSpec, lambda: f64, tau: Tau) -> Self {
        SvmModel {
            kernel,
            lambda,
            tau,
            dim: data.dim(),
            support: data.xs_flat().to_vec(),
            alpha: vec![0.0; data.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn support_point(&self, i: usize) -> &[f64] {
        &self.support[i * self.dim..(i + 1) * self.dim]
    }

    /// `[−(1−τ)/(2λn), τ/(2λn)]`.
    pub fn dual_box(&self) -> (f64, f64) {
        dual_box(self.tau, self.lambda, self.len())
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.alpha.iter().enumerate().map(|(i, a)| a * self.kernel.eval(self.support_point(i), x)).sum()
    }

    pub fn predict_clipped(&self, x: &[f64]) -> f64 {
        clip(self.predict(x))
    }

    /// `αᵀGα`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            if self.alpha[i] == 0.0 {
                continue;
            }
            for j in 0..self.len() {
                s += self.alpha[i] * self.alpha[j] * self.kernel.eval(self.support_point(i), self.support_point(j));
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: SvmModel = serde_json::from_str(s)?;
        m.kernel.validate()?;
        if m.dim == 0 || m.support.len() != m.dim * m.alpha.len() {
            return Err(Error::invalid("model support and coefficients disagree"));
        }
        Ok(m)
    }
}

pub fn dual_box(tau: Tau, lambda: f64, n: usize) -> (f64, f64) {
    let c = 1.0 / (2.0 * lambda * n as f64);
    (-(1.0 - tau.value()) * c, tau.value() * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Completed coordinate-descent epochs.
    pub iterations: usize,
    pub objective: f64,
    pub dual_objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Value of `½αᵀGα − αᵀy` after each epoch.
    #[serde(skip)]
    pub dual_history: Vec<f64>,
}

impl SolveDiagnostics {
    pub fn duality_gap(&self) -> f64 {
        self.objective - self.dual_objective
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_epochs: usize,
    /// Width of the band in which `f(xᵢ) = yᵢ` counts as a tie.
    pub band: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_epochs: 10_000, band: 1e-10, seed: 0 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_epochs == 0 || !(self.band >= 0.0) {
            return Err(Error::invalid("solver needs tol > 0, max_epochs ≥ 1 and band ≥ 0"));
        }
        Ok(())
    }
}

/// Dual problem on a precomputed Gram matrix.
#[derive(Debug, Clone)]
pub struct DualProblem {
    gram: DMatrix<f64>,
    y: Vec<f64>,
    tau: Tau,
    lambda: f64,
    lo: f64,
    hi: f64,
}

impl DualProblem {
    /// Checks shape, symmetry and positive semidefiniteness of `gram`.
    pub fn new(gram: DMatrix<f64>, y: Vec<f64>, lambda: f64, tau: Tau) -> Result<Self> {
        let p = Self::new_unchecked(gram, y, lambda, tau)?;
        let g = &p.gram;
        let asym = (0..g.nrows())
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (g[(i, j)] - g[(j, i)]).abs())
            .fold(0.0, f64::max);
        if asym > 1e-12 {
            return Err(Error::invalid(format!("Gram matrix is not symmetric (max asymmetry {asym:e})")));
        }
        let min = sorted_eigenvalues(g.clone()).last().copied().unwrap_or(0.0);
        if min < -PSD_TOLERANCE {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(p)
    }

    /// For Gram matrices of validated kernels, which are PSD by construction.
    pub(crate) fn new_unchecked(gram: DMatrix<f64>, y: Vec<f64>, lambda: f64, tau: Tau) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        let n = y.len();
        if n == 0 || gram.nrows() != n || gram.ncols() != n {
            return Err(Error::invalid("Gram matrix and targets disagree in size"));
        }
        if let Some(i) = (0..n).find(|&i| gram[(i, i)] < -PSD_TOLERANCE) {
            return Err(Error::NotPsd { min_eigenvalue: gram[(i, i)] });
        }
        let (lo, hi) = dual_box(tau, lambda, n);
        Ok(DualProblem { gram, y, tau, lambda, lo, hi })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Same Gram and targets with a different `λ`.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        self.lambda = lambda;
        (self.lo, self.hi) = dual_box(self.tau, lambda, self.len());
        Ok(self)
    }

    fn decision(&self, alpha: &[f64]) -> Vec<f64> {
        let a = DVector::from_column_slice(alpha);
        (&self.gram * a).iter().copied().collect()
    }

    fn qp_value(&self, alpha: &[f64], f: &[f64]) -> f64 {
        alpha.iter().zip(f).zip(&self.y).map(|((a, fi), yi)| a * (0.5 * fi - yi)).sum()
    }

    fn primal(&self, alpha: &[f64], f: &[f64]) -> f64 {
        let norm: f64 = alpha.iter().zip(f).map(|(a, fi)| a * fi).sum();
        let risk: f64 =
            self.y.iter().zip(f).map(|(&y, &t)| pinball_loss(self.tau, y, t)).sum::<f64>() / self.len() as f64;
        self.lambda * norm + risk
    }

    fn residual(&self, alpha: &[f64], f: &[f64], band: f64) -> f64 {
        kkt_violation(alpha, f, &self.y, self.lo, self.hi, band)
    }

    /// Solves from `warm` (clamped into the box) or from zero.
    pub fn solve(&self, warm: Option<&[f64]>, opts: &SolverOptions) -> Result<(Vec<f64>, SolveDiagnostics)> {
        opts.validate()?;
        let n = self.len();
        let mut alpha: Vec<f64> = match warm {
            Some(w) if w.len() == n => w.iter().map(|a| a.clamp(self.lo, self.hi)).collect(),
            Some(_) => return Err(Error::invalid("warm start has the wrong length")),
            None => vec![0.0; n],
        };
        let mut f = self.decision(&alpha);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut history = Vec::new();
        let mut residual = self.residual(&alpha, &f, opts.band);
        let mut epochs = 0;
        while residual > opts.tol && epochs < opts.max_epochs {
            if epochs % 2 == 0 {
                order.shuffle(&mut rng);
                for &i in &order {
                    self.coordinate_step(i, &mut alpha, &mut f);
                }
            } else {
                for _ in 0..n {
                    let i = self.most_violating(&alpha, &f);
                    self.coordinate_step(i, &mut alpha, &mut f);
                }
            }
            epochs += 1;
            f = self.decision(&alpha);
            self.newton_polish(&mut alpha, &mut f);
            history.push(self.qp_value(&alpha, &f));
            residual = self.residual(&alpha, &f, opts.band);
        }
        let qp = self.qp_value(&alpha, &f);
        let diag = SolveDiagnostics {
            iterations: epochs,
            objective: self.primal(&alpha, &f),
            dual_objective: -2.0 * self.lambda * qp,
            kkt_residual: residual,
            converged: residual <= opts.tol,
            dual_history: history,
        };
        Ok((alpha, diag))
    }

    /// Coordinate whose exact minimization decreases the objective most.
    fn most_violating(&self, alpha: &[f64], f: &[f64]) -> usize {
        let mut best = (0, -1.0);
        for i in 0..alpha.len() {
            let gii = self.gram[(i, i)].max(1e-300);
            let g = f[i] - self.y[i];
            let d = (alpha[i] - g / gii).clamp(self.lo, self.hi) - alpha[i];
            let gain = -(g * d + 0.5 * gii * d * d);
            if gain > best.1 {
                best = (i, gain);
            }
        }
        best.0
    }

    fn coordinate_step(&self, i: usize, alpha: &mut [f64], f: &mut [f64]) {
        let gii = self.gram[(i, i)];
        let g = f[i] - self.y[i];
        let new = if gii > 0.0 {
            (alpha[i] - g / gii).clamp(self.lo, self.hi)
        } else if g > 0.0 {
            self.lo
        } else if g < 0.0 {
            self.hi
        } else {
            alpha[i]
        };
        let delta = new - alpha[i];
        if delta != 0.0 {
            alpha[i] = new;
            for (fj, gji) in f.iter_mut().zip(self.gram.column(i).iter()) {
                *fj += delta * gji;
            }
        }
    }

    /// Newton step on the free variables with projected backtracking.
    fn newton_polish(&self, alpha: &mut [f64], f: &mut [f64]) {
        let free: Vec<usize> = (0..self.len()).filter(|&i| alpha[i] > self.lo && alpha[i] < self.hi).collect();
        if free.is_empty() || free.len() > 2000 {
            return;
        }
        let k = free.len();
        let sub = DMatrix::from_fn(k, k, |a, b| self.gram[(free[a], free[b])]);
        let rhs = DVector::from_iterator(k, free.iter().map(|&i| self.y[i] - f[i]));
        let scale = (0..k).map(|a| sub[(a, a)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut dir = None;
        for jitter in [0.0, 1e-12, 1e-10, 1e-8] {
            let m = &sub + DMatrix::identity(k, k) * (jitter * scale);
            if let Some(ch) = m.cholesky() {
                let d = ch.solve(&rhs);
                if d.iter().all(|v| v.is_finite()) {
                    dir = Some(d);
                    break;
                }
            }
        }
        let Some(d) = dir else { return };
        let cols = DMatrix::from_fn(self.len(), k, |r, c| self.gram[(r, free[c])]);
        let mut step = 1.0;
        for _ in 0..30 {
            let delta = DVector::from_iterator(
                k,
                free.iter().enumerate().map(|(a, &i)| (alpha[i] + step * d[a]).clamp(self.lo, self.hi) - alpha[i]),
            );
            let df = &cols * &delta;
            // Change of ½αᵀGα − αᵀy for α + δ on the free coordinates.
            let change: f64 = free.iter().enumerate().map(|(a, &i)| delta[a] * (f[i] - self.y[i] + 0.5 * df[i])).sum();
            if change < 0.0 {
                for (a, &i) in free.iter().enumerate() {
                    alpha[i] = (alpha[i] + step * d[a]).clamp(self.lo, self.hi);
                }
                for (fi, dfi) in f.iter_mut().zip(df.iter()) {
                    *fi += dfi;
                }
                return;
            }
            step *= 0.5;
        }
    }
}

/// `max_i |αᵢ − Π_box(αᵢ − gᵢ)|` with `gᵢ = fᵢ − yᵢ`, zeroed inside the tie band.
fn kkt_violation(alpha: &[f64], f: &[f64], y: &[f64], lo: f64, hi: f64, band: f64) -> f64 {
    alpha
        .iter()
        .zip(f)
        .zip(y)
        .map(|((&a, &fi), &yi)| {
            let g = fi - yi;
            let g = if g.abs() <= band { 0.0 } else { g };
            (a - (a - g).clamp(lo, hi)).abs()
        })
        .fold(0.0, f64::max)
}

pub fn train(
    data: &Dataset,
    spec: &KernelSpec,
    lambda: f64,
    tau: Tau,
    opts: &SolverOptions,
) -> Result<(SvmModel, SolveDiagnostics)> {
    let g = gram_with(spec, data.xs_flat(), data.dim(), Execution::default())?;
    let problem = DualProblem::new_unchecked(g, data.ys().to_vec(), lambda, tau)?;
    let (alpha, diag) = problem.solve(None, opts)?;
    let model = SvmModel { alpha, ..SvmModel::zero(data, *spec, lambda, tau) };
    Ok((model, diag))
}

/// `λ·αᵀGα + R_{D,L}(f)`.
pub fn objective(model: &SvmModel, data: &Dataset) -> Result<f64> {
    check_dim(model, data)?;
    let preds: Vec<f64> = data.iter().map(|(x, _)| model.predict(x)).collect();
    Ok(model.lambda * model.rkhs_norm_sq() + empirical_risk_of_predictions(model.tau, data.ys(), &preds)?)
}

/// Optimality violation of `model` as a solution on its training set `data`.
pub fn kkt_residual(model: &SvmModel, data: &Dataset, band: f64) -> Result<f64> {
    check_dim(model, data)?;
    if data.len() != model.len() {
        return Err(Error::invalid("kkt_residual needs the training set of the model"));
    }
    let f: Vec<f64> = data.iter().map(|(x, _)| model.predict(x)).collect();
    let (lo, hi) = model.dual_box();
    Ok(kkt_violation(&model.alpha, &f, data.ys(), lo, hi, band))
}

fn check_dim(model: &SvmModel, data: &Dataset) -> Result<()> {
    if model.dim != data.dim() {
        return Err(Error::invalid(format!("model dimension {} but data dimension {}", model.dim, data.dim())));
    }
    Ok(())
}

pub fn predict(model: &SvmModel, x: &[f64]) -> f64 {
    model.predict(x)
}

pub fn predict_clipped(model: &SvmModel, x: &[f64]) -> f64 {
    model.predict_clipped(x)
}

/// Predictions at many points through one cross-Gram product.
pub fn predict_many(model: &SvmModel, xs: &[f64], exec: Execution) -> Vec<f64> {
    let k = cross_gram(&model.kernel, xs, &model.support, model.dim, exec);
    (k * DVector::from_column_slice(&model.alpha)).iter().copied().collect()
}

/// Subgradient descent on the primal in `H` with step `1/(2λt)` and
/// `t`-weighted averaging of the iterates.
pub fn reference_train(
    data: &Dataset,
    spec: &KernelSpec,
    lambda: f64,
    tau: Tau,
    iterations: usize,
) -> Result<SvmModel> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let n = data.len();
    let g = gram_with(spec, data.xs_flat(), data.dim(), Execution::default())?;
    let c = 1.0 / (2.0 * lambda * n as f64);
    let (lo, hi) = dual_box(tau, lambda, n);
    let mut beta = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut avg = vec![0.0; n];
    let mut weight_sum = 0.0;
    let mut target = vec![0.0; n];
    for t in 1..=iterations {
        let t = t as f64;
        for i in 0..n {
            let y = data.y(i);
            // −∂_t L(y, f) scaled into coefficient units; 0 at ties.
            target[i] = if f[i] < y {
                tau.value() * c
            } else if f[i] > y {
                -(1.0 - tau.value()) * c
            } else {
                0.0
            };
        }
        let keep = (t - 1.0) / t;
        let mut delta = vec![0.0; n];
        for i in 0..n {
            let new = (keep * beta[i] + target[i] / t).clamp(lo, hi);
            delta[i] = new - beta[i];
            beta[i] = new;
        }
        for (j, &dj) in delta.iter().enumerate() {
            if dj != 0.0 {
                for i in 0..n {
                    f[i] += dj * g[(i, j)];
                }
            }
        }
        weight_sum += t;
        for i in 0..n {
            avg[i] += t * beta[i];
        }
    }
    let alpha = if weight_sum > 0.0 { avg.iter().map(|a| a / weight_sum).collect() } else { avg };
    Ok(SvmModel { alpha, ..SvmModel::zero(data, *spec, lambda, tau) })
}
