//! Inner risks `C_Q(t) = ∫ L(y, t) dQ(y)` of the pinball loss and their excesses.
//!
//! The excess over the minimum is computed from the closed form
//!
//! ```text
//! C_Q(t_max + u) − C*_Q = u·q₊ + ∫₀ᵘ Q((t_max, t_max + s)) ds
//! C_Q(t_min − u) − C*_Q = u·q₋ + ∫₀ᵘ Q((t_min − s, t_min)) ds
//! ```
//!
//! with `Q((−∞, t_max]) = τ + q₊` and `Q([t_min, ∞)) = 1 − τ + q₋`. The
//! integrals become partial first moments, `∫₀ᵘ Q((t, t+s)) ds = ∫_{(t, t+u)} (t + u − y) dQ(y)`.
//! `C_Q(t) − C*_Q` evaluated directly is kept as an independent cross-check.

use serde::{Deserialize, Serialize};

use crate::distributions::{quantile_interval, ConditionalModel, QuantileInterval, TypeQParams};
use crate::error::{Error, Result};
use crate::law::{Law, Region};
use crate::loss::Tau;

/// Minimal inner risk and the atom balances at the quantile endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerRiskProfile {
    pub q_plus: f64,
    pub q_minus: f64,
    pub quantile: QuantileInterval,
    pub c_star: f64,
}

/// Inner-risk calculus for one conditional law at one quantile level.
#[derive(Debug, Clone)]
pub struct InnerRisk {
    law: Law,
    tau: Tau,
    profile: InnerRiskProfile,
}

impl InnerRisk {
    pub fn new(law: Law, tau: Tau) -> Self {
        let quantile = quantile_interval(&law, tau);
        let t = tau.value();
        let q_plus = (law.cdf(quantile.t_max) - t).max(0.0);
        let q_minus = (law.mass(Region::at_least(quantile.t_min)) - (1.0 - t)).max(0.0);
        let c_star = raw_inner_risk(&law, tau, quantile.t_min);
        let profile = InnerRiskProfile { q_plus, q_minus, quantile, c_star };
        InnerRisk { law, tau, profile }
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    pub fn profile(&self) -> &InnerRiskProfile {
        &self.profile
    }

    pub fn quantile(&self) -> QuantileInterval {
        self.profile.quantile
    }

    /// `C_Q(t)`.
    pub fn inner(&self, t: f64) -> f64 {
        raw_inner_risk(&self.law, self.tau, t)
    }

    /// `C_Q(t) − C*_Q` from the endpoint formulas; exactly zero on the quantile set.
    pub fn excess(&self, t: f64) -> f64 {
        let QuantileInterval { t_min, t_max } = self.profile.quantile;
        if t > t_max {
            let u = t - t_max;
            let ramp = -self.law.moment(Region::open(t_max, t), t, 1);
            u * self.profile.q_plus + ramp.max(0.0)
        } else if t < t_min {
            let u = t_min - t;
            let ramp = self.law.moment(Region::open(t, t_min), t, 1);
            u * self.profile.q_minus + ramp.max(0.0)
        } else {
            0.0
        }
    }

    /// Smallest excess at distance at least `eps` from the quantile set.
    pub fn self_calibration(&self, eps: f64) -> Result<f64> {
        if !(eps >= 0.0) {
            return Err(Error::invalid(format!("eps must be nonnegative, got {eps}")));
        }
        if eps == 0.0 {
            return Ok(0.0);
        }
        let QuantileInterval { t_min, t_max } = self.profile.quantile;
        Ok(self.excess(t_min - eps).min(self.excess(t_max + eps)))
    }
}

fn raw_inner_risk(law: &Law, tau: Tau, t: f64) -> f64 {
    let tau = tau.value();
    let upper = law.moment(Region::at_least(t), t, 1);
    let lower = -law.moment(Region::below(t), t, 1);
    tau * upper + (1.0 - tau) * lower
}

/// `C_{P(·|x)}(t)`.
pub fn inner_risk(model: &ConditionalModel, x: &[f64], tau: Tau, t: f64) -> f64 {
    raw_inner_risk(&model.conditional_law(x), tau, t)
}

pub fn min_inner_risk(model: &ConditionalModel, x: &[f64], tau: Tau) -> InnerRiskProfile {
    *InnerRisk::new(model.conditional_law(x), tau).profile()
}

pub fn excess_inner_risk(model: &ConditionalModel, x: &[f64], tau: Tau, t: f64) -> f64 {
    InnerRisk::new(model.conditional_law(x), tau).excess(t)
}

pub fn self_calibration_fn(model: &ConditionalModel, x: &[f64], tau: Tau, eps: f64) -> Result<f64> {
    InnerRisk::new(model.conditional_law(x), tau).self_calibration(eps)
}

/// `δ(ε) = ε^q` on `[0, α]`, `qα^{q−1}ε − α^q(q−1)` on `[α, 2]`.
pub fn lower_pol_delta(alpha: f64, q: f64, eps: f64) -> Result<f64> {
    if !((0.0..=2.0).contains(&alpha) && q >= 1.0 && (0.0..=2.0).contains(&eps)) {
        return Err(Error::invalid(format!(
            "lower_pol_delta needs alpha, eps in [0,2] and q >= 1; got alpha={alpha}, q={q}, eps={eps}"
        )));
    }
    Ok(if eps <= alpha { eps.powf(q) } else { q * alpha.powf(q - 1.0) * eps - alpha.powf(q) * (q - 1.0) })
}

/// `q⁻¹ 2^{1−q} γ_Q ε^q`.
pub fn self_cal_lower_bound(params: &TypeQParams, eps: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&eps) {
        return Err(Error::invalid(format!("eps must lie in [0,2], got {eps}")));
    }
    let q = params.q;
    Ok(2f64.powf(1.0 - q) * params.gamma * eps.powf(q) / q)
}
