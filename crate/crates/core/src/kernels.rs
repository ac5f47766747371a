//! Bounded kernels on `[-1,1]^d`, Gram matrices and spectral-decay fits.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Eigenvalues at or below this value are excluded from decay fits.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// Minimum number of eigenvalues above the floor needed for a fit.
pub const MIN_USABLE_EIGENVALUES: usize = 5;

/// Negative eigenvalues down to this value count as roundoff.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// A kernel with `sup_x k(x,x) ≤ 1` on `[-1,1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(−|x−x′|²/σ²)`.
    GaussianRbf { bandwidth: f64 },
    /// `((x·x′ + c)/(d + c))^degree`; degree 0 is the constant kernel.
    Polynomial { degree: u32, offset: f64, dim: usize },
    /// Matérn kernel with smoothness 1/2, 3/2 or 5/2 and length scale `ℓ`.
    Matern { smoothness: f64, length_scale: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::GaussianRbf { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::GaussianRbf { bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
                }
            }
            KernelSpec::Polynomial { offset, dim, .. } => {
                if !(offset > 0.0 && offset.is_finite()) || dim == 0 {
                    return Err(Error::invalid("polynomial kernel needs offset > 0 and dim ≥ 1"));
                }
            }
            KernelSpec::Matern { smoothness, length_scale } => {
                if ![0.5, 1.5, 2.5].contains(&smoothness) {
                    return Err(Error::invalid(format!("Matérn smoothness must be 0.5, 1.5 or 2.5, got {smoothness}")));
                }
                if !(length_scale > 0.0 && length_scale.is_finite()) {
                    return Err(Error::invalid("Matérn length scale must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], xp: &[f64]) -> f64 {
        match *self {
            KernelSpec::GaussianRbf { bandwidth } => (-sq_dist(x, xp) / (bandwidth * bandwidth)).exp(),
            KernelSpec::Polynomial { degree, offset, dim } => {
                let dot: f64 = x.iter().zip(xp).map(|(a, b)| a * b).sum();
                ((dot + offset) / (dim as f64 + offset)).powi(degree as i32)
            }
            KernelSpec::Matern { smoothness, length_scale } => {
                let r = sq_dist(x, xp).sqrt() / length_scale;
                if smoothness == 0.5 {
                    (-r).exp()
                } else if smoothness == 1.5 {
                    let s = 3f64.sqrt() * r;
                    (1.0 + s) * (-s).exp()
                } else {
                    let s = 5f64.sqrt() * r;
                    (1.0 + s + s * s / 3.0) * (-s).exp()
                }
            }
        }
    }
}

fn sq_dist(x: &[f64], xp: &[f64]) -> f64 {
    x.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], xp: &[f64]) -> f64 {
    spec.eval(x, xp)
}

/// Gram matrix of row-major points `xs` with `dim` coordinates each.
pub fn gram(spec: &KernelSpec, xs: &[f64], dim: usize) -> Result<DMatrix<f64>> {
    gram_with(spec, xs, dim, Execution::default())
}

pub fn gram_with(spec: &KernelSpec, xs: &[f64], dim: usize, exec: Execution) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if dim == 0 || xs.is_empty() || !xs.len().is_multiple_of(dim) {
        return Err(Error::invalid("gram needs a nonempty point set with a matching dimension"));
    }
    let n = xs.len() / dim;
    let pt = |i: usize| &xs[i * dim..(i + 1) * dim];
    let rows = exec.map_indexed(n, |i| (i..n).map(|j| spec.eval(pt(i), pt(j))).collect::<Vec<f64>>());
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// `K[i][j] = k(a_i, b_j)`.
pub fn cross_gram(spec: &KernelSpec, a: &[f64], b: &[f64], dim: usize, exec: Execution) -> DMatrix<f64> {
    let na = a.len() / dim;
    let nb = b.len() / dim;
    let rows = exec.map_indexed(na, |i| {
        let ai = &a[i * dim..(i + 1) * dim];
        (0..nb).map(|j| spec.eval(ai, &b[j * dim..(j + 1) * dim])).collect::<Vec<f64>>()
    });
    DMatrix::from_fn(na, nb, |i, j| rows[i][j])
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Power-law fit `λ_i ≈ a_hat · i^{−1/rho_hat}` to a spectrum.
///
/// The spectrum of `Gram/n` is only a proxy for the integral operator's, so
/// the estimate is an approximation, flagged by `empirical`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub a_hat: f64,
    pub rho_hat: f64,
    pub slope: f64,
    pub intercept: f64,
    /// First and last 1-based index used in the fit.
    pub first_index: usize,
    pub last_index: usize,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub empirical: bool,
}

/// Least-squares fit of `ln λ_i` against `ln i` over eigenvalues above the floor.
///
/// `eigenvalues` must be sorted in descending order.
pub fn fit_power_law(eigenvalues: &[f64]) -> Result<DecayEstimate> {
    let pts: Vec<(f64, f64)> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > EIGENVALUE_FLOOR)
        .map(|(i, &v)| (((i + 1) as f64).ln(), v.ln()))
        .collect();
    if pts.len() < MIN_USABLE_EIGENVALUES {
        return Err(Error::InsufficientEigenvalues { found: pts.len() });
    }
    let first_index = eigenvalues.iter().position(|&v| v > EIGENVALUE_FLOOR).unwrap() + 1;
    let last_index = eigenvalues.iter().rposition(|&v| v > EIGENVALUE_FLOOR).unwrap() + 1;
    let (slope, intercept) = least_squares_line(&pts);
    let residual =
        (pts.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    let rho = if slope < 0.0 { -1.0 / slope } else { 1.0 };
    let rho_hat = rho.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    Ok(DecayEstimate {
        a_hat: intercept.exp().max(1.0),
        rho_hat,
        slope,
        intercept,
        first_index,
        last_index,
        residual,
        empirical: false,
    })
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `n·d` coordinates drawn uniformly from `[-1,1]^d`, deterministic in `seed`.
pub fn uniform_inputs(n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Descending eigenvalues of `Gram/n`; fails if the matrix is not PSD.
pub fn normalized_spectrum(spec: &KernelSpec, xs: &[f64], dim: usize) -> Result<Vec<f64>> {
    let g = gram(spec, xs, dim)?;
    let n = g.nrows() as f64;
    let ev = sorted_eigenvalues(g / n);
    let min = ev.last().copied().unwrap_or(0.0);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(ev)
}

/// Decay fit of the spectrum of `Gram/n`.
pub fn spectrum_decay(spec: &KernelSpec, xs: &[f64], dim: usize) -> Result<DecayEstimate> {
    let mut est = fit_power_law(&normalized_spectrum(spec, xs, dim)?)?;
    est.empirical = true;
    Ok(est)
}
