//! Numerical checks of the self-calibration inequality and the variance bound.
//!
//! For `f: X → [-1,1]` and a model with a τ-quantile of p-average type q:
//!
//! ```text
//! ‖dist(f, F*)‖_{L_r}           ≤ 2^{1−1/q} q^{1/q} ‖γ⁻¹‖_{L_p}^{1/q} (R(f) − R*)^{1/q},   r = pq/(p+1)
//! E(L∘f − L∘f*)²                ≤ 2^{2−ϑ} q^ϑ ‖γ⁻¹‖_{L_p}^ϑ (R(f) − R*)^ϑ,               ϑ = min{2/q, p/(p+1)}
//! ```
//!
//! All integrals over `y` are exact; integrals over `x` use an [`XQuadrature`].
//! Both sides are evaluated against the same discrete marginal, for which the
//! inequalities hold as well, so quadrature error cannot produce a violation.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{ConditionalModel, LpExponent, QuantileInterval, TypeQParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inner_risk::InnerRisk;
use crate::law::{Bound, Region};
use crate::loss::Tau;
use crate::quadrature::XQuadrature;
use crate::report::fmt_f64;

/// Default allowance for negative slack.
pub const DEFAULT_SLACK_TOLERANCE: f64 = 1e-8;

/// A real function on X.
pub trait XFunction: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> XFunction for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Piecewise-constant function on equal slabs of `x₁ ∈ [-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("piecewise-constant function needs at least one cell"));
        }
        Ok(PiecewiseConstant { values })
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl XFunction for PiecewiseConstant {
    fn eval(&self, x: &[f64]) -> f64 {
        let k = self.values.len();
        let cell = (((x[0] + 1.0) * 0.5 * k as f64).floor() as isize).clamp(0, k as isize - 1);
        self.values[cell as usize]
    }
}

/// `count` functions with i.i.d. `Uniform[-1,1]` values on `cells` slabs.
pub fn random_test_functions(cells: usize, count: usize, seed: u64) -> Result<Vec<PiecewiseConstant>> {
    if cells == 0 {
        return Err(Error::invalid("cells must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| PiecewiseConstant::new((0..cells).map(|_| rng.random_range(-1.0..=1.0)).collect())).collect()
}

/// `x ↦ t_min(x)`, a measurable selection of the quantile set.
pub fn quantile_selection(model: &ConditionalModel, tau: Tau) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |x: &[f64]| model.quantile_set(x, tau).t_min
}

/// Conditional inner-risk data at every node of a quadrature rule.
#[derive(Debug, Clone)]
pub struct ConditionalGrid {
    quad: XQuadrature,
    risks: Vec<InnerRisk>,
    tau: Tau,
}

impl ConditionalGrid {
    pub fn new(model: &ConditionalModel, tau: Tau, quad: XQuadrature) -> Result<Self> {
        if quad.dim() != model.dim() {
            return Err(Error::invalid(format!(
                "quadrature dimension {} does not match model dimension {}",
                quad.dim(),
                model.dim()
            )));
        }
        let risks = quad.iter().map(|(x, _)| InnerRisk::new(model.conditional_law(x), tau)).collect();
        Ok(ConditionalGrid { quad, risks, tau })
    }

    pub fn quadrature(&self) -> &XQuadrature {
        &self.quad
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    /// Values of `f` at the nodes.
    pub fn values<F: XFunction + ?Sized>(&self, f: &F) -> Vec<f64> {
        self.quad.iter().map(|(x, _)| f.eval(x)).collect()
    }

    /// `R(f) − R*` as the `P_X`-average of the excess inner risk.
    pub fn excess_risk<F: XFunction + ?Sized>(&self, f: &F) -> f64 {
        self.excess_risk_values(&self.values(f))
    }

    /// As [`Self::excess_risk`] from the values of `f` at the nodes.
    pub fn excess_risk_values(&self, fx: &[f64]) -> f64 {
        self.risks.iter().zip(fx).zip(self.quad.weights()).map(|((r, &t), w)| w * r.excess(t)).sum()
    }

    /// `‖dist(f, F*)‖_{L_r(P_X)}`.
    pub fn dist_norm<F: XFunction + ?Sized>(&self, f: &F, r: LpExponent) -> f64 {
        self.dist_norm_values(&self.values(f), r)
    }

    /// As [`Self::dist_norm`] from node values.
    pub fn dist_norm_values(&self, fx: &[f64], r: LpExponent) -> f64 {
        let d: Vec<f64> = self.risks.iter().zip(fx).map(|(risk, &t)| risk.quantile().dist(t)).collect();
        r.norm(&d, self.quad.weights())
    }

    /// `E_P (L∘f − L∘f*)²` with `f*` the projection of `f` onto the quantile set.
    pub fn variance_term<F: XFunction + ?Sized>(&self, f: &F) -> f64 {
        self.variance_term_values(&self.values(f))
    }

    /// As [`Self::variance_term`] from node values.
    pub fn variance_term_values(&self, fx: &[f64]) -> f64 {
        self.risks
            .iter()
            .zip(fx)
            .zip(self.quad.weights())
            .map(|((risk, &a), w)| {
                let b = risk.quantile().project(a);
                w * loss_difference_second_moment(risk, a, b)
            })
            .sum()
    }

    /// `E_{P_X} |f − f*|²`, the Lipschitz upper bound of [`Self::variance_term`].
    pub fn squared_distance<F: XFunction + ?Sized>(&self, f: &F) -> f64 {
        self.dist_norm(f, LpExponent::Finite(2.0)).powi(2)
    }

    /// Certificate at every node; fails if any node lacks one.
    pub fn certificates(&self, model: &ConditionalModel) -> Result<Vec<TypeQParams>> {
        self.quad.iter().map(|(x, _)| model.type_q_params(x, self.tau)).collect()
    }

    pub fn quantiles(&self) -> impl Iterator<Item = QuantileInterval> + '_ {
        self.risks.iter().map(|r| r.quantile())
    }
}

/// `∫ (L(y,a) − L(y,b))² dQ(y)`, exact.
fn loss_difference_second_moment(risk: &InnerRisk, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let tau = risk.tau().value();
    let law = risk.law();
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let below = (1.0 - tau) * (a - b);
    let above = tau * (b - a);
    // On [lo, hi) the difference is ±(y − c).
    let c = if a < b { tau * a + (1.0 - tau) * b } else { (1.0 - tau) * a + tau * b };
    below * below * law.mass(Region::below(lo))
        + law.moment(Region::new(Bound::Closed(lo), Bound::Open(hi)), c, 2)
        + above * above * law.mass(Region::at_least(hi))
}

/// Which inequality a report checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    SelfCalibration,
    VarianceBound,
}

/// One test function's two sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub excess_risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub kind: CheckKind,
    pub tau: f64,
    pub p: LpExponent,
    pub q: f64,
    pub r: f64,
    pub theta: Option<f64>,
    pub gamma_inv_norm: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: CalibrationParams,
    pub tolerance: f64,
    pub records: Vec<CalibrationRecord>,
    pub pass: bool,
}

impl CalibrationReport {
    fn new(params: CalibrationParams, tolerance: f64, records: Vec<CalibrationRecord>) -> Self {
        let pass = records.iter().all(|r| r.slack >= -tolerance);
        CalibrationReport { params, tolerance, records, pass }
    }

    pub fn violations(&self) -> impl Iterator<Item = &CalibrationRecord> {
        self.records.iter().filter(move |r| r.slack < -self.tolerance)
    }

    pub fn min_slack(&self) -> f64 {
        self.records.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    /// One row per test function.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,lhs,rhs,slack,excess_risk")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.index,
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.slack),
                fmt_f64(r.excess_risk)
            )?;
        }
        Ok(())
    }
}

/// Both inequality checks for one `(model, τ, p)`.
#[derive(Debug, Clone)]
pub struct CalibrationCheck {
    grid: ConditionalGrid,
    p: LpExponent,
    q: f64,
    gamma_inv_norm: f64,
}

impl CalibrationCheck {
    /// Fails with [`Error::NotApplicable`] unless every node has a certificate.
    pub fn new(model: &ConditionalModel, tau: Tau, p: LpExponent, quad: XQuadrature) -> Result<Self> {
        let grid = ConditionalGrid::new(model, tau, quad)?;
        let certs = grid.certificates(model)?;
        let q = certs[0].q;
        if certs.iter().any(|c| c.q != q) {
            return Err(Error::invalid("certificate exponent q varies over X"));
        }
        let inv: Vec<f64> = certs.iter().map(|c| 1.0 / c.gamma).collect();
        let gamma_inv_norm = p.norm(&inv, grid.quad.weights());
        Ok(CalibrationCheck { grid, p, q, gamma_inv_norm })
    }

    pub fn grid(&self) -> &ConditionalGrid {
        &self.grid
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gamma_inv_norm(&self) -> f64 {
        self.gamma_inv_norm
    }

    /// `r = pq/(p+1)`.
    pub fn r(&self) -> f64 {
        self.p.holder_ratio() * self.q
    }

    /// `ϑ = min{2/q, p/(p+1)}`.
    pub fn theta(&self) -> f64 {
        (2.0 / self.q).min(self.p.holder_ratio())
    }

    pub fn self_calibration<F: XFunction>(&self, fs: &[F], exec: Execution, tolerance: f64) -> CalibrationReport {
        let q = self.q;
        let constant = 2f64.powf(1.0 - 1.0 / q) * q.powf(1.0 / q) * self.gamma_inv_norm.powf(1.0 / q);
        let r = LpExponent::Finite(self.r());
        let records = exec.map_indexed(fs.len(), |i| {
            let fx = self.grid.values(&fs[i]);
            let excess = self.grid.excess_risk_values(&fx);
            let lhs = self.grid.dist_norm_values(&fx, r);
            let rhs = constant * excess.powf(1.0 / q);
            CalibrationRecord { index: i, lhs, rhs, slack: rhs - lhs, excess_risk: excess }
        });
        let params = CalibrationParams {
            kind: CheckKind::SelfCalibration,
            tau: self.grid.tau.value(),
            p: self.p,
            q,
            r: self.r(),
            theta: None,
            gamma_inv_norm: self.gamma_inv_norm,
            constant,
        };
        CalibrationReport::new(params, tolerance, records)
    }

    pub fn variance_bound<F: XFunction>(&self, fs: &[F], exec: Execution, tolerance: f64) -> CalibrationReport {
        let q = self.q;
        let theta = self.theta();
        let constant = 2f64.powf(2.0 - theta) * q.powf(theta) * self.gamma_inv_norm.powf(theta);
        let records = exec.map_indexed(fs.len(), |i| {
            let fx = self.grid.values(&fs[i]);
            let excess = self.grid.excess_risk_values(&fx);
            let lhs = self.grid.variance_term_values(&fx);
            let rhs = constant * excess.powf(theta);
            CalibrationRecord { index: i, lhs, rhs, slack: rhs - lhs, excess_risk: excess }
        });
        let params = CalibrationParams {
            kind: CheckKind::VarianceBound,
            tau: self.grid.tau.value(),
            p: self.p,
            q,
            r: self.r(),
            theta: Some(theta),
            gamma_inv_norm: self.gamma_inv_norm,
            constant,
        };
        CalibrationReport::new(params, tolerance, records)
    }
}

pub fn excess_risk<F: XFunction>(model: &ConditionalModel, tau: Tau, f: &F, quad: &XQuadrature) -> Result<f64> {
    Ok(ConditionalGrid::new(model, tau, quad.clone())?.excess_risk(f))
}

pub fn dist_norm<F: XFunction>(
    model: &ConditionalModel,
    tau: Tau,
    f: &F,
    r: LpExponent,
    quad: &XQuadrature,
) -> Result<f64> {
    Ok(ConditionalGrid::new(model, tau, quad.clone())?.dist_norm(f, r))
}

pub fn variance_term<F: XFunction>(model: &ConditionalModel, tau: Tau, f: &F, quad: &XQuadrature) -> Result<f64> {
    Ok(ConditionalGrid::new(model, tau, quad.clone())?.variance_term(f))
}

pub fn check_self_calibration<F: XFunction>(
    model: &ConditionalModel,
    tau: Tau,
    p: LpExponent,
    fs: &[F],
    quad: &XQuadrature,
    exec: Execution,
    tolerance: f64,
) -> Result<CalibrationReport> {
    Ok(CalibrationCheck::new(model, tau, p, quad.clone())?.self_calibration(fs, exec, tolerance))
}

pub fn check_variance_bound<F: XFunction>(
    model: &ConditionalModel,
    tau: Tau,
    p: LpExponent,
    fs: &[F],
    quad: &XQuadrature,
    exec: Execution,
    tolerance: f64,
) -> Result<CalibrationReport> {
    Ok(CalibrationCheck::new(model, tau, p, quad.clone())?.variance_bound(fs, exec, tolerance))
}
