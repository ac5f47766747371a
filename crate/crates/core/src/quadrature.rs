//! Gauss–Legendre rules and quadrature against the uniform marginal on `[-1,1]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default Gauss–Legendre order over X.
pub const DEFAULT_ORDER: usize = 64;

/// Nodes and weights of the `order`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Roots of `P_order` by Newton iteration from the Chebyshev-like initial guess.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A discrete probability measure approximating uniform `P_X` on `[-1,1]^d`.
///
/// The first coordinate may be split into equal panels so that functions
/// that are piecewise constant on those panels are integrated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XQuadrature {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl XQuadrature {
    /// Tensor Gauss–Legendre rule of the given order, one panel.
    pub fn gauss_legendre(dim: usize, order: usize) -> Result<Self> {
        Self::composite(dim, order, 1)
    }

    /// Tensor rule with `panels` equal Gauss–Legendre panels along `x₁`.
    pub fn composite(dim: usize, order: usize, panels: usize) -> Result<Self> {
        if dim == 0 || order == 0 || panels == 0 {
            return Err(Error::invalid("quadrature needs positive dimension, order and panel count"));
        }
        let (gx, gw) = gauss_legendre(order);
        let h = 2.0 / panels as f64;
        let mut first: Vec<(f64, f64)> = Vec::with_capacity(order * panels);
        for k in 0..panels {
            let a = -1.0 + k as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                first.push((a + 0.5 * h * (x + 1.0), 0.25 * h * w));
            }
        }
        let rest: Vec<(f64, f64)> = gx.iter().zip(&gw).map(|(x, w)| (*x, 0.5 * w)).collect();

        let count = first.len() * rest.len().pow(dim as u32 - 1);
        let mut nodes = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; dim];
        loop {
            let (x0, w0) = first[idx[0]];
            nodes.push(x0);
            let mut w = w0;
            for &i in &idx[1..] {
                nodes.push(rest[i].0);
                w *= rest[i].1;
            }
            weights.push(w);
            // Odometer over the tensor index.
            let mut d = dim;
            loop {
                if d == 0 {
                    return Ok(XQuadrature { dim, nodes, weights });
                }
                d -= 1;
                let limit = if d == 0 { first.len() } else { rest.len() };
                idx[d] += 1;
                if idx[d] < limit {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// `∫ f dP_X` under this rule.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}
