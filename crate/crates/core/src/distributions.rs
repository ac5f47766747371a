//! Synthetic conditional distributions on `X × ℝ` with known quantile structure.
//!
//! A [`ConditionalModel`] draws `x` uniformly from `[-1,1]^d` and then
//! `y = g(x) + ε`, where the noise law of `ε` comes from one of four families
//! and `g` is a bounded location function. Because the conditional law at `x`
//! is a shift of a fixed [`Law`], its CDF, quantile set and type certificate
//! are available in closed form.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::law::{Anchor, Atom, Law, PowerPiece, Region};
use crate::loss::{Dataset, Tau};
use crate::quadrature::XQuadrature;

/// Certificates are rejected when `b_Q` falls below this.
const MIN_CERTIFICATE_MASS: f64 = 1e-14;

/// Largest tolerated overshoot of the conditional support past `[-1, 1]`.
const SUPPORT_SLACK: f64 = 1e-12;

/// Closed interval of τ-quantiles of a conditional law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileInterval {
    pub t_min: f64,
    pub t_max: f64,
}

impl QuantileInterval {
    pub fn is_singleton(&self) -> bool {
        self.t_min == self.t_max
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_min <= t && t <= self.t_max
    }

    /// Distance from `t` to the interval.
    pub fn dist(&self, t: f64) -> f64 {
        if t < self.t_min {
            self.t_min - t
        } else if t > self.t_max {
            t - self.t_max
        } else {
            0.0
        }
    }

    /// Closest point of the interval to `t`.
    pub fn project(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }
}

/// Quantile-type certificate `(q, b_Q, α_Q, γ_Q)` with `γ_Q = b_Q α_Q^{q-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeQParams {
    pub q: f64,
    pub b: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl TypeQParams {
    pub fn new(q: f64, b: f64, alpha: f64) -> Result<Self> {
        if !(q >= 1.0 && b > 0.0 && alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::invalid(format!(
                "certificate needs q >= 1, b > 0, alpha in (0,2]; got q={q}, b={b}, alpha={alpha}"
            )));
        }
        Ok(TypeQParams { q, b, alpha, gamma: b * alpha.powf(q - 1.0) })
    }
}

/// Exponent `p ∈ (0, ∞]` of an `L_p` norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpExponent {
    Finite(f64),
    Infinite,
}

impl LpExponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p > 0.0 && p.is_finite() {
            Ok(LpExponent::Finite(p))
        } else if p == f64::INFINITY {
            Ok(LpExponent::Infinite)
        } else {
            Err(Error::invalid(format!("L_p exponent must lie in (0, inf], got {p}")))
        }
    }

    /// `p / (p + 1)`, equal to 1 for `p = ∞`.
    pub fn holder_ratio(self) -> f64 {
        match self {
            LpExponent::Finite(p) => p / (p + 1.0),
            LpExponent::Infinite => 1.0,
        }
    }

    /// `L_p` norm of `values` under the probability weights `weights`.
    pub fn norm(self, values: &[f64], weights: &[f64]) -> f64 {
        match self {
            LpExponent::Infinite => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            LpExponent::Finite(p) => {
                let s: f64 = values.iter().zip(weights).map(|(v, w)| w * v.abs().powf(p)).sum();
                s.powf(1.0 / p)
            }
        }
    }
}

impl fmt::Display for LpExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpExponent::Finite(p) => write!(f, "{p}"),
            LpExponent::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for LpExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "INF" => Ok(LpExponent::Infinite),
            other => {
                let p: f64 = other.parse().map_err(|_| Error::invalid(format!("bad L_p exponent {other:?}")))?;
                LpExponent::finite(p)
            }
        }
    }
}

impl Serialize for LpExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LpExponent::Finite(p) => s.serialize_f64(*p),
            LpExponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for LpExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => LpExponent::finite(p).map_err(de::Error::custom),
            Raw::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Location function `g: X → ℝ` that shifts the noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Location {
    Zero,
    /// `g(x) = amplitude · sin(π x₁)`.
    Sine {
        amplitude: f64,
    },
}

impl Default for Location {
    fn default() -> Self {
        Location::Sine { amplitude: 0.5 }
    }
}

impl Location {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Location::Zero => 0.0,
            Location::Sine { amplitude } => amplitude * (std::f64::consts::PI * x[0]).sin(),
        }
    }

    /// `sup_x |g(x)|` over `[-1,1]^d`.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            Location::Zero => 0.0,
            Location::Sine { amplitude } => amplitude.abs(),
        }
    }
}

/// Secondary mixture component `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NuSpec {
    Uniform { lo: f64, hi: f64 },
    Atoms { locations: Vec<f64>, weights: Vec<f64> },
}

impl NuSpec {
    fn law(&self) -> Result<Law> {
        match self {
            NuSpec::Uniform { lo, hi } => Law::uniform(*lo, *hi),
            NuSpec::Atoms { locations, weights } => {
                if locations.len() != weights.len() || locations.is_empty() {
                    return Err(Error::invalid("nu atoms need matching nonempty locations and weights"));
                }
                Law::new(locations.iter().zip(weights).map(|(&loc, &mass)| Atom { loc, mass }).collect(), vec![])
            }
        }
    }
}

/// Noise family; the four cases mirror the standard examples of quantile types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `αν + (1−α)·Uniform[−w, w]`; type 2 at every τ whose quantile is
    /// inside the uniform support.
    BoundedDensityMixture {
        mixture_weight: f64,
        half_width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<NuSpec>,
    },
    /// `αν + (1−α)μ` with `μ` having density `b|y|^p` on `[−w_l, w_r]`,
    /// `μ((−∞,0]) = cusp_level`; type `2+p` when the quantile sits at the cusp.
    PolynomialDensity {
        mixture_weight: f64,
        exponent: f64,
        floor: f64,
        cusp_level: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<NuSpec>,
    },
    /// `αν + (1−α)δ_{t*}`; type 1 when τ falls inside the atom's CDF jump.
    DiracAtomMixture {
        mixture_weight: f64,
        atom: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<NuSpec>,
    },
    /// `(1−a−b)ν + aδ_lo + bδ_hi` with `ν([lo, hi]) = 0`; type 1.
    TwoAtom {
        lower: f64,
        upper: f64,
        lower_weight: f64,
        upper_weight: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<NuSpec>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::BoundedDensityMixture { .. } => "bounded-density-mixture",
            Family::PolynomialDensity { .. } => "polynomial-density",
            Family::DiracAtomMixture { .. } => "dirac-atom-mixture",
            Family::TwoAtom { .. } => "two-atom",
        }
    }

    /// Widths `(w_l, w_r)` of the polynomial density so that it has total
    /// mass 1 and mass `cusp_level` left of the cusp.
    fn polynomial_widths(exponent: f64, floor: f64, cusp_level: f64) -> (f64, f64) {
        let e = exponent + 1.0;
        ((e * cusp_level / floor).powf(1.0 / e), (e * (1.0 - cusp_level) / floor).powf(1.0 / e))
    }

    fn noise_law(&self) -> Result<Law> {
        let mix = |alpha: f64, nu: &Option<NuSpec>, main: Law| -> Result<Law> {
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::invalid(format!("mixture weight must lie in [0,1), got {alpha}")));
            }
            match nu {
                _ if alpha == 0.0 => Ok(main),
                Some(nu) => Law::mixture(&[(alpha, &nu.law()?), (1.0 - alpha, &main)]),
                None => Err(Error::invalid("positive mixture weight requires a nu component")),
            }
        };
        match self {
            Family::BoundedDensityMixture { mixture_weight, half_width, nu } => {
                if !(*half_width > 0.0) {
                    return Err(Error::invalid("half_width must be positive"));
                }
                mix(*mixture_weight, nu, Law::uniform(-half_width, *half_width)?)
            }
            Family::PolynomialDensity { mixture_weight, exponent, floor, cusp_level, nu } => {
                if !(*exponent > -1.0 && *floor > 0.0 && *cusp_level > 0.0 && *cusp_level < 1.0) {
                    return Err(Error::invalid(
                        "polynomial density needs exponent > -1, floor > 0 and cusp_level in (0,1)",
                    ));
                }
                let (wl, wr) = Self::polynomial_widths(*exponent, *floor, *cusp_level);
                let main = Law::new(
                    vec![],
                    vec![
                        PowerPiece { lo: -wl, hi: 0.0, coef: *floor, exponent: *exponent, anchor: Anchor::Upper },
                        PowerPiece { lo: 0.0, hi: wr, coef: *floor, exponent: *exponent, anchor: Anchor::Lower },
                    ],
                )?;
                mix(*mixture_weight, nu, main)
            }
            Family::DiracAtomMixture { mixture_weight, atom, nu } => {
                if let (Some(nu), true) = (nu, *mixture_weight > 0.0) {
                    if nu.law()?.atom_mass(*atom) > 0.0 {
                        return Err(Error::invalid("nu must not charge the Dirac atom"));
                    }
                }
                mix(*mixture_weight, nu, Law::dirac(*atom))
            }
            Family::TwoAtom { lower, upper, lower_weight, upper_weight, nu } => {
                let (a, b) = (*lower_weight, *upper_weight);
                if !(lower < upper && a > 0.0 && b > 0.0 && a + b <= 1.0 + 1e-15) {
                    return Err(Error::invalid(
                        "two-atom needs lower < upper, positive weights, and weights summing to at most 1",
                    ));
                }
                let atoms = Law::new(
                    vec![Atom { loc: *lower, mass: a / (a + b) }, Atom { loc: *upper, mass: b / (a + b) }],
                    vec![],
                )?;
                let rest = 1.0 - a - b;
                if rest <= 1e-15 {
                    return Ok(atoms);
                }
                let nu = nu.as_ref().ok_or_else(|| Error::invalid("weights below 1 require a nu component"))?;
                let nu = nu.law()?;
                if nu.mass(Region::closed(*lower, *upper)) > 0.0 {
                    return Err(Error::invalid("nu must put no mass on [lower, upper]"));
                }
                Law::mixture(&[(rest, &nu), (1.0 - rest, &atoms)])
            }
        }
    }
}

/// Serializable description of a [`ConditionalModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub location: Location,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    1
}

/// Distribution `P` on `[-1,1]^d × [-1,1]` with analytic conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct ConditionalModel {
    spec: ModelSpec,
    noise: Law,
}

impl TryFrom<ModelSpec> for ConditionalModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        ConditionalModel::new(spec)
    }
}

impl From<ConditionalModel> for ModelSpec {
    fn from(m: ConditionalModel) -> ModelSpec {
        m.spec
    }
}

impl ConditionalModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        let noise = spec.family.noise_law()?;
        let (lo, hi) = noise.support();
        let g = spec.location.sup_abs();
        if lo - g < -1.0 - SUPPORT_SLACK || hi + g > 1.0 + SUPPORT_SLACK {
            return Err(Error::invalid(format!(
                "conditional support [{lo}, {hi}] shifted by up to {g} leaves [-1, 1]"
            )));
        }
        Ok(ConditionalModel { spec, noise })
    }

    pub fn from_family(family: Family, location: Location) -> Result<Self> {
        ConditionalModel::new(ModelSpec { family, location, dim: 1 })
    }

    /// `Uniform[−w, w]` noise, the basic type-2 family.
    pub fn uniform_noise(half_width: f64, location: Location) -> Result<Self> {
        Self::from_family(Family::BoundedDensityMixture { mixture_weight: 0.0, half_width, nu: None }, location)
    }

    /// `aδ_lo + (1−a)δ_hi` noise.
    pub fn two_atom(lower: f64, upper: f64, lower_weight: f64, location: Location) -> Result<Self> {
        Self::from_family(
            Family::TwoAtom { lower, upper, lower_weight, upper_weight: 1.0 - lower_weight, nu: None },
            location,
        )
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> &Family {
        &self.spec.family
    }

    pub fn location(&self) -> &Location {
        &self.spec.location
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Noise law before the location shift.
    pub fn noise(&self) -> &Law {
        &self.noise
    }

    /// `P(·|x)`.
    pub fn conditional_law(&self, x: &[f64]) -> Law {
        self.noise.shifted(self.spec.location.eval(x))
    }

    /// `P((−∞, y] | x)`.
    pub fn conditional_cdf(&self, x: &[f64], y: f64) -> f64 {
        self.noise.cdf(y - self.spec.location.eval(x))
    }

    /// τ-quantile set of `P(·|x)`.
    pub fn quantile_set(&self, x: &[f64], tau: Tau) -> QuantileInterval {
        quantile_interval(&self.conditional_law(x), tau)
    }

    /// Type certificate of `P(·|x)` at level τ.
    pub fn type_q_params(&self, x: &[f64], tau: Tau) -> Result<TypeQParams> {
        let shift = self.spec.location.eval(x);
        let law = self.noise.shifted(shift);
        let quantile = quantile_interval(&law, tau);
        self.certificate(&law, shift, quantile, tau)
    }

    fn certificate(&self, law: &Law, shift: f64, quantile: QuantileInterval, tau: Tau) -> Result<TypeQParams> {
        let QuantileInterval { t_min, t_max } = quantile;
        match self.spec.family {
            Family::BoundedDensityMixture { mixture_weight, half_width, .. } => {
                let alpha = (t_min - (shift - half_width)).min(shift + half_width - t_max);
                if alpha <= 0.0 {
                    return Err(Error::NotApplicable(format!(
                        "quantile [{t_min}, {t_max}] is not inside the density support at tau={}",
                        tau.value()
                    )));
                }
                TypeQParams::new(2.0, (1.0 - mixture_weight) / (2.0 * half_width), alpha.min(2.0))
            }
            Family::PolynomialDensity { mixture_weight, exponent, floor, cusp_level, .. } => {
                if (t_min - shift).abs() > 1e-12 || (t_max - shift).abs() > 1e-12 {
                    return Err(Error::NotApplicable(format!(
                        "quantile [{t_min}, {t_max}] is not at the density cusp {shift} for tau={}",
                        tau.value()
                    )));
                }
                let (wl, wr) = Family::polynomial_widths(exponent, floor, cusp_level);
                TypeQParams::new(2.0 + exponent, (1.0 - mixture_weight) * floor / (1.0 + exponent), wl.min(wr).min(2.0))
            }
            Family::DiracAtomMixture { .. } | Family::TwoAtom { .. } => atom_certificate(law, quantile, tau),
        }
    }

    /// `‖γ⁻¹‖_{L_p(P_X)}` over the nodes of `quad`.
    pub fn gamma_inv_norm(&self, tau: Tau, p: LpExponent, quad: &XQuadrature) -> Result<f64> {
        let inv: Vec<f64> =
            quad.iter().map(|(x, _)| self.type_q_params(x, tau).map(|c| 1.0 / c.gamma)).collect::<Result<_>>()?;
        Ok(p.norm(&inv, quad.weights()))
    }

    /// `n` i.i.d. draws `x ~ Uniform[-1,1]^d`, `y ~ P(·|x)`, deterministic in `seed`.
    pub fn sample_joint(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.spec.dim;
        let mut xs = Vec::with_capacity(n * d);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let start = xs.len();
            for _ in 0..d {
                xs.push(rng.random_range(-1.0..=1.0));
            }
            let g = self.spec.location.eval(&xs[start..]);
            ys.push((g + self.noise.sample(&mut rng)).clamp(-1.0, 1.0));
        }
        Dataset::new(d, xs, ys)
    }
}

/// Quantile interval of an arbitrary law.
pub fn quantile_interval(law: &Law, tau: Tau) -> QuantileInterval {
    let (t_min, t_max) = law.quantile_bounds(tau.value());
    QuantileInterval { t_min, t_max }
}

/// Type-1 certificate: both quantile endpoints carry atoms.
fn atom_certificate(law: &Law, quantile: QuantileInterval, tau: Tau) -> Result<TypeQParams> {
    let QuantileInterval { t_min, t_max } = quantile;
    let (lo_mass, hi_mass) = (law.atom_mass(t_min), law.atom_mass(t_max));
    if lo_mass <= 0.0 || hi_mass <= 0.0 {
        return Err(Error::NotApplicable(format!(
            "quantile endpoints [{t_min}, {t_max}] do not both carry atoms at tau={}",
            tau.value()
        )));
    }
    let b = if t_min != t_max {
        lo_mass.min(hi_mass)
    } else {
        let tau = tau.value();
        (tau - law.cdf_left(t_min)).min(law.cdf(t_max) - tau)
    };
    if b <= MIN_CERTIFICATE_MASS {
        return Err(Error::NotApplicable(format!(
            "tau={} sits on the edge of the atom's CDF jump at {t_min}",
            tau.value()
        )));
    }
    TypeQParams::new(1.0, b, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau(v: f64) -> Tau {
        Tau::new(v).unwrap()
    }

    fn dirac_example() -> ConditionalModel {
        ConditionalModel::from_family(
            Family::DiracAtomMixture {
                mixture_weight: 0.4,
                atom: 0.5,
                nu: Some(NuSpec::Uniform { lo: -1.0, hi: 1.0 }),
            },
            Location::Zero,
        )
        .unwrap()
    }

    fn polynomial_example() -> ConditionalModel {
        ConditionalModel::from_family(
            Family::PolynomialDensity { mixture_weight: 0.0, exponent: 1.0, floor: 1.0, cusp_level: 0.5, nu: None },
            Location::Zero,
        )
        .unwrap()
    }

    /// Grid check of both quantile conditions, independent of the bisection.
    fn grid_quantile(law: &Law, tau: f64) -> (f64, f64) {
        let grid: Vec<f64> = (0..=20_000).map(|i| -1.0 + i as f64 * 1e-4).collect();
        let ok: Vec<f64> = grid
            .into_iter()
            .filter(|&t| law.cdf(t) >= tau - 1e-12 && law.mass(Region::at_least(t)) >= 1.0 - tau - 1e-12)
            .collect();
        (ok[0], *ok.last().unwrap())
    }

    #[test]
    fn conditional_cdf_examples() {
        let m = ConditionalModel::uniform_noise(0.5, Location::Zero).unwrap();
        assert!((m.conditional_cdf(&[0.0], 0.0) - 0.5).abs() < 1e-15);
        assert!((m.conditional_cdf(&[0.0], 0.25) - 0.75).abs() < 1e-15);
        let two = ConditionalModel::two_atom(-0.5, 0.5, 0.5, Location::Zero).unwrap();
        assert_eq!(two.conditional_cdf(&[0.0], 0.0), 0.5);
    }

    #[test]
    fn quantile_set_examples_agree_with_grid() {
        let m = ConditionalModel::uniform_noise(0.5, Location::Zero).unwrap();
        let q = m.quantile_set(&[0.3], tau(0.25));
        let (a, b) = grid_quantile(&m.conditional_law(&[0.3]), 0.25);
        assert!((q.t_min + 0.25).abs() < 1e-15 && q.is_singleton());
        assert!((a - q.t_min).abs() < 2e-4 && (b - q.t_max).abs() < 2e-4);

        let two = ConditionalModel::two_atom(-0.5, 0.5, 0.5, Location::Zero).unwrap();
        let q = two.quantile_set(&[0.0], tau(0.5));
        assert_eq!((q.t_min, q.t_max), (-0.5, 0.5));
        let (a, b) = grid_quantile(&two.conditional_law(&[0.0]), 0.5);
        assert!((a + 0.5).abs() < 1e-9 && (b - 0.5).abs() < 1e-9);

        let d = dirac_example();
        let q = d.quantile_set(&[0.0], tau(0.5));
        assert_eq!((q.t_min, q.t_max), (0.5, 0.5));
        let (a, b) = grid_quantile(&d.conditional_law(&[0.0]), 0.5);
        assert!((a - 0.5).abs() < 1e-9 && (b - 0.5).abs() < 1e-9);
    }

    #[test]
    fn type_q_examples() {
        let m = ConditionalModel::uniform_noise(0.5, Location::Zero).unwrap();
        let c = m.type_q_params(&[0.0], tau(0.5)).unwrap();
        assert_eq!((c.q, c.b, c.alpha, c.gamma), (2.0, 1.0, 0.5, 0.5));

        let c = polynomial_example().type_q_params(&[0.0], tau(0.5)).unwrap();
        assert_eq!(c.q, 3.0);
        assert!((c.b - 0.5).abs() < 1e-15);

        let two = ConditionalModel::two_atom(-0.5, 0.5, 0.5, Location::Zero).unwrap();
        let c = two.type_q_params(&[0.0], tau(0.5)).unwrap();
        assert_eq!((c.q, c.b, c.alpha, c.gamma), (1.0, 0.5, 2.0, 0.5));

        // Singleton atom quantile uses the CDF-jump case.
        let c = two.type_q_params(&[0.0], tau(0.1)).unwrap();
        assert!((c.b - 0.1).abs() < 1e-15);
    }

    #[test]
    fn dirac_certificate_window() {
        // αν((−∞, t*)) = 0.4 · 0.75 = 0.3, window (0.3, 0.9).
        let d = dirac_example();
        let c = d.type_q_params(&[0.0], tau(0.5)).unwrap();
        assert!((c.b - 0.2).abs() < 1e-14, "{c:?}");
        for t in [0.1, 0.3, 0.9, 0.95] {
            assert!(matches!(d.type_q_params(&[0.0], tau(t)), Err(Error::NotApplicable(_))), "tau {t}");
        }
    }

    #[test]
    fn polynomial_certificate_only_at_cusp() {
        let m = polynomial_example();
        assert!(matches!(m.type_q_params(&[0.0], tau(0.3)), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn gamma_inv_norm_examples() {
        let quad = XQuadrature::gauss_legendre(1, 64).unwrap();
        let m = ConditionalModel::uniform_noise(0.5, Location::Zero).unwrap();
        let sup = m.gamma_inv_norm(tau(0.5), LpExponent::Infinite, &quad).unwrap();
        let grid_max = (0..=1000)
            .map(|i| 1.0 / m.type_q_params(&[-1.0 + i as f64 * 0.002], tau(0.5)).unwrap().gamma)
            .fold(0.0, f64::max);
        assert_eq!(sup, 2.0);
        assert_eq!(grid_max, 2.0);
        let l1 = m.gamma_inv_norm(tau(0.5), LpExponent::Finite(1.0), &quad).unwrap();
        assert!((l1 - 2.0).abs() < 1e-13);

        let two = ConditionalModel::two_atom(-0.5, 0.5, 0.5, Location::Zero).unwrap();
        assert_eq!(two.gamma_inv_norm(tau(0.5), LpExponent::Infinite, &quad).unwrap(), 2.0);

        let d = dirac_example();
        assert!(d.gamma_inv_norm(tau(0.95), LpExponent::Infinite, &quad).is_err());
    }

    #[test]
    fn support_is_enforced() {
        assert!(ConditionalModel::uniform_noise(0.6, Location::default()).is_err());
        assert!(ConditionalModel::uniform_noise(0.5, Location::default()).is_ok());
        assert!(ConditionalModel::uniform_noise(1.0, Location::Zero).is_ok());
    }

    #[test]
    fn invalid_families_are_rejected() {
        let bad_dirac = Family::DiracAtomMixture {
            mixture_weight: 0.5,
            atom: 0.2,
            nu: Some(NuSpec::Atoms { locations: vec![0.2], weights: vec![1.0] }),
        };
        assert!(ConditionalModel::from_family(bad_dirac, Location::Zero).is_err());
        let bad_two = Family::TwoAtom {
            lower: -0.5,
            upper: 0.5,
            lower_weight: 0.3,
            upper_weight: 0.3,
            nu: Some(NuSpec::Uniform { lo: -1.0, hi: 1.0 }),
        };
        assert!(ConditionalModel::from_family(bad_two, Location::Zero).is_err());
        let no_nu = Family::BoundedDensityMixture { mixture_weight: 0.2, half_width: 0.5, nu: None };
        assert!(ConditionalModel::from_family(no_nu, Location::Zero).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let m = ConditionalModel::uniform_noise(0.5, Location::default()).unwrap();
        let a = m.sample_joint(5, 7).unwrap();
        let b = m.sample_joint(5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(m.sample_joint(0, 7).is_err());
    }

    #[test]
    fn marginal_cdf_matches_quadrature() {
        let m = ConditionalModel::uniform_noise(0.5, Location::default()).unwrap();
        let data = m.sample_joint(100_000, 1).unwrap();
        let empirical = data.ys().iter().filter(|&&y| y <= 0.0).count() as f64 / data.len() as f64;
        let quad = XQuadrature::gauss_legendre(1, 64).unwrap();
        let exact = quad.integrate(|x| m.conditional_cdf(x, 0.0));
        assert!((empirical - exact).abs() < 0.01, "{empirical} vs {exact}");
    }

    #[test]
    fn spec_round_trips_through_json() {
        let d = dirac_example();
        let json = serde_json::to_string(&d).unwrap();
        let back: ConditionalModel = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn lp_exponent_parsing() {
        assert_eq!("inf".parse::<LpExponent>().unwrap(), LpExponent::Infinite);
        assert_eq!("4".parse::<LpExponent>().unwrap(), LpExponent::Finite(4.0));
        assert!("0".parse::<LpExponent>().is_err());
        let v: LpExponent = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(v, LpExponent::Infinite);
    }
}
