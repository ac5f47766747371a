//! Probability laws on ℝ built from atoms and power-law density pieces.
//!
//! Every law is a finite mixture of
//!
//! * atoms `m·δ_a`, and
//! * pieces with density `c·(y − lo)^p` or `c·(hi − y)^p` on `[lo, hi]`, `p > −1`.
//!
//! Uniform densities are pieces with `p = 0`. For such laws the mass and the
//! first two moments over any interval have closed forms, so CDFs, inner
//! risks and their excesses are integrated exactly rather than by generic
//! numerical quadrature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CDF values this close to the target level are treated as hitting it
/// exactly when locating quantile endpoints at breakpoints.
pub const CDF_SNAP: f64 = 1e-13;

/// Which endpoint the power in a density piece is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPiece {
    pub lo: f64,
    pub hi: f64,
    pub coef: f64,
    pub exponent: f64,
    pub anchor: Anchor,
}

impl PowerPiece {
    /// Density piece of total mass `mass` on `[lo, hi]`.
    pub fn with_mass(lo: f64, hi: f64, exponent: f64, anchor: Anchor, mass: f64) -> Self {
        let coef = mass * (exponent + 1.0) / (hi - lo).powf(exponent + 1.0);
        PowerPiece { lo, hi, coef, exponent, anchor }
    }

    fn mass(&self) -> f64 {
        self.coef * (self.hi - self.lo).powf(self.exponent + 1.0) / (self.exponent + 1.0)
    }

    fn density(&self, y: f64) -> f64 {
        if y < self.lo || y > self.hi {
            return 0.0;
        }
        let z = match self.anchor {
            Anchor::Lower => y - self.lo,
            Anchor::Upper => self.hi - y,
        };
        self.coef * z.powf(self.exponent)
    }

    /// `∫_u^v (y − center)^j · density(y) dy` for `j ≤ 2`, clipped to the piece.
    fn moment(&self, u: f64, v: f64, center: f64, j: u32) -> f64 {
        let u = u.max(self.lo);
        let v = v.min(self.hi);
        if v <= u {
            return 0.0;
        }
        let p = self.exponent;
        // Substitute z = distance from the anchor; (y - center) = sign·z + d.
        let (z1, z2, d, sign) = match self.anchor {
            Anchor::Lower => (u - self.lo, v - self.lo, self.lo - center, 1.0),
            Anchor::Upper => (self.hi - v, self.hi - u, self.hi - center, -1.0),
        };
        let zpow = |k: u32| {
            let e = p + k as f64 + 1.0;
            (z2.powf(e) - z1.powf(e)) / e
        };
        let total = match j {
            0 => zpow(0),
            1 => d * zpow(0) + sign * zpow(1),
            2 => d * d * zpow(0) + 2.0 * d * sign * zpow(1) + zpow(2),
            _ => unreachable!("moments above order 2 are not used"),
        };
        self.coef * total
    }

    fn shifted(mut self, delta: f64) -> Self {
        self.lo += delta;
        self.hi += delta;
        self
    }

    fn reflected(self) -> Self {
        PowerPiece {
            lo: -self.hi,
            hi: -self.lo,
            coef: self.coef,
            exponent: self.exponent,
            anchor: match self.anchor {
                Anchor::Lower => Anchor::Upper,
                Anchor::Upper => Anchor::Lower,
            },
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let z = (self.hi - self.lo) * u.powf(1.0 / (self.exponent + 1.0));
        match self.anchor {
            Anchor::Lower => self.lo + z,
            Anchor::Upper => self.hi - z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub loc: f64,
    pub mass: f64,
}

/// Endpoint of an integration region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Unbounded,
    Open(f64),
    Closed(f64),
}

/// Interval of integration with open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lo: Bound,
    pub hi: Bound,
}

impl Region {
    pub const ALL: Region = Region { lo: Bound::Unbounded, hi: Bound::Unbounded };

    pub fn new(lo: Bound, hi: Bound) -> Self {
        Region { lo, hi }
    }

    /// `(-∞, t]`.
    pub fn at_most(t: f64) -> Self {
        Region { lo: Bound::Unbounded, hi: Bound::Closed(t) }
    }

    /// `(-∞, t)`.
    pub fn below(t: f64) -> Self {
        Region { lo: Bound::Unbounded, hi: Bound::Open(t) }
    }

    /// `[t, ∞)`.
    pub fn at_least(t: f64) -> Self {
        Region { lo: Bound::Closed(t), hi: Bound::Unbounded }
    }

    /// `(t, ∞)`.
    pub fn above(t: f64) -> Self {
        Region { lo: Bound::Open(t), hi: Bound::Unbounded }
    }

    /// `(a, b)`.
    pub fn open(a: f64, b: f64) -> Self {
        Region { lo: Bound::Open(a), hi: Bound::Open(b) }
    }

    /// `[a, b]`.
    pub fn closed(a: f64, b: f64) -> Self {
        Region { lo: Bound::Closed(a), hi: Bound::Closed(b) }
    }

    fn contains(&self, y: f64) -> bool {
        let lo_ok = match self.lo {
            Bound::Unbounded => true,
            Bound::Open(a) => y > a,
            Bound::Closed(a) => y >= a,
        };
        let hi_ok = match self.hi {
            Bound::Unbounded => true,
            Bound::Open(b) => y < b,
            Bound::Closed(b) => y <= b,
        };
        lo_ok && hi_ok
    }

    fn span(&self) -> (f64, f64) {
        let lo = match self.lo {
            Bound::Unbounded => f64::NEG_INFINITY,
            Bound::Open(a) | Bound::Closed(a) => a,
        };
        let hi = match self.hi {
            Bound::Unbounded => f64::INFINITY,
            Bound::Open(b) | Bound::Closed(b) => b,
        };
        (lo, hi)
    }
}

/// A probability law on ℝ: finitely many atoms plus power-law density pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Law {
    atoms: Vec<Atom>,
    pieces: Vec<PowerPiece>,
}

impl Law {
    /// Validates and normalizes the components. Total mass must be 1.
    pub fn new(atoms: Vec<Atom>, pieces: Vec<PowerPiece>) -> Result<Self> {
        for a in &atoms {
            if !(a.loc.is_finite() && a.mass >= 0.0) {
                return Err(Error::invalid(format!("bad atom {a:?}")));
            }
        }
        for p in &pieces {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi) {
                return Err(Error::invalid(format!("bad piece support [{}, {}]", p.lo, p.hi)));
            }
            if !(p.exponent > -1.0 && p.coef >= 0.0) {
                return Err(Error::invalid(format!(
                    "piece needs exponent > -1 and nonnegative coefficient, got {:?}",
                    p
                )));
            }
        }
        let mut atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.mass > 0.0).collect();
        atoms.sort_by(|a, b| a.loc.total_cmp(&b.loc));
        atoms.dedup_by(|next, kept| {
            if next.loc == kept.loc {
                kept.mass += next.mass;
                true
            } else {
                false
            }
        });
        let pieces: Vec<PowerPiece> = pieces.into_iter().filter(|p| p.coef > 0.0).collect();
        let law = Law { atoms, pieces };
        let total = law.total_mass();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("law has total mass {total}, expected 1")));
        }
        Ok(law)
    }

    pub fn dirac(loc: f64) -> Self {
        Law { atoms: vec![Atom { loc, mass: 1.0 }], pieces: vec![] }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
        }
        Law::new(vec![], vec![PowerPiece::with_mass(lo, hi, 0.0, Anchor::Lower, 1.0)])
    }

    /// Convex combination `Σ wᵢ·lawᵢ`. Weights must be nonnegative and sum to 1.
    pub fn mixture(components: &[(f64, &Law)]) -> Result<Self> {
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if components.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixture weights must be nonnegative and sum to 1"));
        }
        let mut atoms = Vec::new();
        let mut pieces = Vec::new();
        for (w, law) in components {
            atoms.extend(law.atoms.iter().map(|a| Atom { loc: a.loc, mass: a.mass * w }));
            pieces.extend(law.pieces.iter().map(|p| PowerPiece { coef: p.coef * w, ..*p }));
        }
        Law::new(atoms, pieces)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[PowerPiece] {
        &self.pieces
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>() + self.pieces.iter().map(|p| p.mass()).sum::<f64>()
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.atoms.iter().map(|a| a.loc).chain(self.pieces.iter().map(|p| p.lo)).fold(f64::INFINITY, f64::min);
        let hi =
            self.atoms.iter().map(|a| a.loc).chain(self.pieces.iter().map(|p| p.hi)).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Law of `Y + delta`.
    pub fn shifted(&self, delta: f64) -> Law {
        Law {
            atoms: self.atoms.iter().map(|a| Atom { loc: a.loc + delta, mass: a.mass }).collect(),
            pieces: self.pieces.iter().map(|p| p.shifted(delta)).collect(),
        }
    }

    /// Law of `-Y`.
    pub fn reflected(&self) -> Law {
        let mut atoms: Vec<Atom> = self.atoms.iter().map(|a| Atom { loc: -a.loc, mass: a.mass }).collect();
        atoms.reverse();
        Law { atoms, pieces: self.pieces.iter().map(|p| p.reflected()).collect() }
    }

    /// `∫_region (y − center)^j dQ(y)` for `j ∈ {0, 1, 2}`.
    pub fn moment(&self, region: Region, center: f64, j: u32) -> f64 {
        assert!(j <= 2, "moment order {j} unsupported");
        let atom_part: f64 = self
            .atoms
            .iter()
            .filter(|a| region.contains(a.loc))
            .map(|a| a.mass * (a.loc - center).powi(j as i32))
            .sum();
        let (u, v) = region.span();
        let piece_part: f64 = self.pieces.iter().map(|p| p.moment(u, v, center, j)).sum();
        atom_part + piece_part
    }

    /// `Q(region)`.
    #[inline]
    pub fn mass(&self, region: Region) -> f64 {
        self.moment(region, 0.0, 0)
    }

    /// `Q((-∞, t])`.
    #[inline]
    pub fn cdf(&self, t: f64) -> f64 {
        self.mass(Region::at_most(t))
    }

    /// `Q((-∞, t))`.
    #[inline]
    pub fn cdf_left(&self, t: f64) -> f64 {
        self.mass(Region::below(t))
    }

    /// `Q({t})`.
    pub fn atom_mass(&self, t: f64) -> f64 {
        self.atoms.iter().filter(|a| a.loc == t).map(|a| a.mass).sum()
    }

    /// Lebesgue density of the continuous part.
    pub fn density(&self, y: f64) -> f64 {
        self.pieces.iter().map(|p| p.density(y)).sum()
    }

    /// Sorted distinct atom locations and piece endpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> =
            self.atoms.iter().map(|a| a.loc).chain(self.pieces.iter().flat_map(|p| [p.lo, p.hi])).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// `min{t : Q((-∞,t]) ≥ level}`.
    pub fn lower_quantile(&self, level: f64) -> f64 {
        let bps = self.breakpoints();
        let mut prev: Option<f64> = None;
        for &b in &bps {
            let at = self.cdf(b);
            if at >= level - CDF_SNAP {
                let before = at - self.atom_mass(b);
                return match prev {
                    // The continuous part crosses the level strictly inside (prev, b).
                    Some(a) if before > level + CDF_SNAP => self.bisect_cdf(a, b, level),
                    _ => b,
                };
            }
            prev = Some(b);
        }
        *bps.last().expect("a probability law has at least one breakpoint")
    }

    fn bisect_cdf(&self, mut lo: f64, mut hi: f64, level: f64) -> f64 {
        // Invariant: cdf(lo) < level <= cdf(hi).
        loop {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                return hi;
            }
            if self.cdf(mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    /// `max{t : Q([t,∞)) ≥ 1 − level}`.
    pub fn upper_quantile(&self, level: f64) -> f64 {
        -self.reflected().lower_quantile(1.0 - level)
    }

    /// Endpoints `[t_min, t_max]` of the `level`-quantile set.
    pub fn quantile_bounds(&self, level: f64) -> (f64, f64) {
        let t_min = self.lower_quantile(level);
        let t_max = self.upper_quantile(level);
        // Separate bisections in the continuous case can disagree by a few ulps.
        if t_max - t_min <= 1e-12 {
            (t_min, t_min)
        } else {
            (t_min, t_max)
        }
    }

    /// One draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.total_mass();
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.mass;
            if u < acc {
                return a.loc;
            }
        }
        for p in &self.pieces {
            acc += p.mass();
            if u < acc {
                return p.sample(rng);
            }
        }
        // Roundoff in the cumulative sum: fall back to the last component.
        match (self.pieces.last(), self.atoms.last()) {
            (Some(p), _) => p.sample(rng),
            (None, Some(a)) => a.loc,
            (None, None) => unreachable!("validated laws are nonempty"),
        }
    }
}
