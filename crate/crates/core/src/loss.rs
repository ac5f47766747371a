//! The τ-pinball loss, clipping, and empirical risk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile level, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Tau(f64);

impl Tau {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Tau(value))
        } else {
            Err(Error::invalid(format!("tau must lie in (0,1), got {value}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Tau {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Tau::new(value)
    }
}

impl From<Tau> for f64 {
    fn from(t: Tau) -> f64 {
        t.0
    }
}

/// Pinball loss `L(y, t)`: `(1-τ)(t-y)` below the target, `τ(y-t)` otherwise.
#[inline]
pub fn pinball_loss(tau: Tau, y: f64, t: f64) -> f64 {
    let tau = tau.value();
    if y < t {
        (1.0 - tau) * (t - y)
    } else {
        tau * (y - t)
    }
}

/// Projects onto `[-1, 1]`.
#[inline]
pub fn clip(t: f64) -> f64 {
    t.clamp(-1.0, 1.0)
}

/// Samples `(x, y)` with `x ∈ [-1,1]^d` stored row-major and `y ∈ [-1,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a flat row-major `xs` buffer.
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if ys.is_empty() {
            return Err(Error::invalid("dataset must be nonempty"));
        }
        if xs.len() != dim * ys.len() {
            return Err(Error::invalid(format!(
                "expected {} coordinates for {} points of dimension {dim}, got {}",
                dim * ys.len(),
                ys.len(),
                xs.len()
            )));
        }
        if let Some(v) = xs.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("coordinate {v} outside [-1,1]")));
        }
        if let Some(v) = ys.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("response {v} outside [-1,1]")));
        }
        Ok(Dataset { dim, xs, ys })
    }

    pub fn from_points(points: &[(Vec<f64>, f64)]) -> Result<Self> {
        let dim = points.first().map(|(x, _)| x.len()).unwrap_or(0);
        if points.iter().any(|(x, _)| x.len() != dim) {
            return Err(Error::invalid("points have inconsistent dimensions"));
        }
        let xs = points.iter().flat_map(|(x, _)| x.iter().copied()).collect();
        let ys = points.iter().map(|(_, y)| *y).collect();
        Dataset::new(dim, xs, ys)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn xs_flat(&self) -> &[f64] {
        &self.xs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.xs.chunks_exact(self.dim).zip(self.ys.iter().copied())
    }

    /// Splits into the first `m` points and the rest. Both halves must be nonempty.
    pub fn split_at(&self, m: usize) -> Result<(Dataset, Dataset)> {
        if m == 0 || m >= self.len() {
            return Err(Error::invalid(format!("split point {m} leaves an empty half of {} points", self.len())));
        }
        let (xa, xb) = self.xs.split_at(m * self.dim);
        let (ya, yb) = self.ys.split_at(m);
        Ok((
            Dataset { dim: self.dim, xs: xa.to_vec(), ys: ya.to_vec() },
            Dataset { dim: self.dim, xs: xb.to_vec(), ys: yb.to_vec() },
        ))
    }
}

/// Mean pinball loss of `f` over `data`.
pub fn empirical_risk<F>(tau: Tau, data: &Dataset, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if data.is_empty() {
        return Err(Error::invalid("empirical risk of an empty dataset"));
    }
    let total: f64 = data.iter().map(|(x, y)| pinball_loss(tau, y, f(x))).sum();
    Ok(total / data.len() as f64)
}

/// Mean pinball loss of precomputed predictions.
pub fn empirical_risk_of_predictions(tau: Tau, ys: &[f64], predictions: &[f64]) -> Result<f64> {
    if ys.is_empty() || ys.len() != predictions.len() {
        return Err(Error::invalid("predictions must match a nonempty response vector"));
    }
    let total: f64 = ys.iter().zip(predictions).map(|(&y, &t)| pinball_loss(tau, y, t)).sum();
    Ok(total / ys.len() as f64)
}
