//! Finite measure spaces, weights and weighted `L^p` space descriptors.
//!
//! Every space lives on a finite atom set. A [`SpaceDescriptor`] fixes an
//! exponent and a strictly positive weight `a`, giving the norm
//! `(sum |f_i|^p a_i mu_i)^(1/p)` or `max a_i |f_i|` for the `Inf` exponent.
//! Functionals are always paired against the base masses:
//! `<f, g> = sum f_i g_i mu_i`.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_len, Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct MeasureSpace {
    masses: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    masses: Vec<f64>,
}

impl TryFrom<RawMeasure> for MeasureSpace {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        MeasureSpace::new(raw.masses)
    }
}

impl MeasureSpace {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidMeasure(
                "at least one atom is required".into(),
            ));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "mass {m} is not strictly positive"
            )));
        }
        Ok(Self { masses })
    }

    /// `n` atoms of mass one.
    pub fn counting(n: usize) -> Self {
        Self {
            masses: vec![1.0; n.max(1)],
        }
    }

    /// `n` atoms of mass `1/n`.
    pub fn uniform_probability(n: usize) -> Self {
        let n = n.max(1);
        Self {
            masses: vec![1.0 / n as f64; n],
        }
    }

    pub fn atom_count(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Measure of a set of atoms given by index.
    pub fn measure_of(&self, atoms: &[usize]) -> f64 {
        atoms.iter().map(|&i| self.masses[i]).sum()
    }

    /// `sum f_i g_i mu_i`.
    pub fn pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.masses)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }
}

/// A nonnegative weight, one entry per atom.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidWeight(format!(
                "entry {v} is not a finite nonnegative number"
            )));
        }
        Ok(Self(values))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|v| *v > 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        WeightVector::new(values).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Inf,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else if p == f64::INFINITY {
            Ok(Exponent::Inf)
        } else {
            Err(Error::InvalidExponent(format!("{p} is not in [1, inf]")))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Inf => f64::INFINITY,
        }
    }

    /// The conjugate exponent `p'` with `1/p + 1/p' = 1`.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Inf => Exponent::Finite(1.0),
            Exponent::Finite(p) if p == 1.0 => Exponent::Inf,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Inf => write!(f, "inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::finite(p).map_err(serde::de::Error::custom),
            Raw::Str(s) if s.eq_ignore_ascii_case("inf") => Ok(Exponent::Inf),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unknown exponent {s:?}"))),
        }
    }
}

/// A weighted `L^p(a dmu)` space over a finite measure space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SpaceDescriptor {
    pub p: Exponent,
    pub weight: WeightVector,
    pub measure: MeasureSpace,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    p: Exponent,
    weight: Option<WeightVector>,
    measure: MeasureSpace,
}

impl TryFrom<RawSpace> for SpaceDescriptor {
    type Error = Error;
    fn try_from(raw: RawSpace) -> Result<Self> {
        let weight = raw
            .weight
            .unwrap_or_else(|| WeightVector::ones(raw.measure.atom_count()));
        SpaceDescriptor::new(raw.measure, raw.p, weight)
    }
}

impl SpaceDescriptor {
    pub fn new(measure: MeasureSpace, p: Exponent, weight: WeightVector) -> Result<Self> {
        check_len(measure.atom_count(), weight.len())?;
        if !weight.is_strictly_positive() {
            return Err(Error::InvalidWeight(
                "space weights must be strictly positive; drop null atoms first".into(),
            ));
        }
        if let Exponent::Finite(q) = p {
            Exponent::finite(q)?;
        }
        Ok(Self { p, weight, measure })
    }

    /// Unweighted `l^p` on `n` atoms of unit mass.
    pub fn lp(n: usize, p: Exponent) -> Self {
        Self {
            p,
            weight: WeightVector::ones(n),
            measure: MeasureSpace::counting(n),
        }
    }

    /// `L^p(mu)` with unit weight.
    pub fn on_measure(measure: MeasureSpace, p: Exponent) -> Self {
        let n = measure.atom_count();
        Self {
            p,
            weight: WeightVector::ones(n),
            measure,
        }
    }

    pub fn dim(&self) -> usize {
        self.measure.atom_count()
    }

    pub fn masses(&self) -> &[f64] {
        self.measure.masses()
    }

    pub fn weights(&self) -> &[f64] {
        self.weight.values()
    }

    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        check_len(self.dim(), f.len())?;
        Ok(self.norm_unchecked(f))
    }

    pub(crate) fn norm_unchecked(&self, f: &[f64]) -> f64 {
        let a = self.weights();
        let mu = self.masses();
        match self.p {
            Exponent::Inf => f
                .iter()
                .zip(a)
                .map(|(x, w)| w * x.abs())
                .fold(0.0, f64::max),
            Exponent::Finite(p) if p == 1.0 => f
                .iter()
                .zip(a)
                .zip(mu)
                .map(|((x, w), m)| x.abs() * w * m)
                .sum(),
            Exponent::Finite(p) if p == 2.0 => {
                let s: f64 = f
                    .iter()
                    .zip(a)
                    .zip(mu)
                    .map(|((x, w), m)| x * x * w * m)
                    .sum();
                s.sqrt()
            }
            Exponent::Finite(p) => {
                let scale = f.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                if scale == 0.0 {
                    return 0.0;
                }
                let s: f64 = f
                    .iter()
                    .zip(a)
                    .zip(mu)
                    .map(|((x, w), m)| (x.abs() / scale).powf(p) * w * m)
                    .sum();
                scale * s.powf(1.0 / p)
            }
        }
    }

    pub fn pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        self.measure.pairing(f, g)
    }

    /// The `p`-th power `X_[p]`, normed by `||f||_[p] = || |f|^(1/p) ||^p`.
    pub fn pth_power(&self, p: f64) -> Result<SpaceDescriptor> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidExponent(format!(
                "power {p} must be positive and finite"
            )));
        }
        let weight = match self.p {
            Exponent::Inf => WeightVector(self.weights().iter().map(|a| a.powf(p)).collect()),
            Exponent::Finite(_) => self.weight.clone(),
        };
        let q = match self.p {
            Exponent::Inf => Exponent::Inf,
            Exponent::Finite(q) if q + 1e-12 >= p => Exponent::Finite((q / p).max(1.0)),
            Exponent::Finite(_) => {
                return Err(Error::NotPConvex {
                    space: self.p.to_string(),
                    p,
                });
            }
        };
        Ok(SpaceDescriptor {
            p: q,
            weight,
            measure: self.measure.clone(),
        })
    }

    /// Köthe dual under the base-measure pairing.
    ///
    /// `L^1(a)' = L^inf(1/a)`, `L^inf(a)' = L^1(1/a)`, and for `1 < p < inf`
    /// `L^p(a)' = L^p'(a^(1-p'))`.
    pub fn kothe_dual(&self) -> SpaceDescriptor {
        let a = self.weights();
        let (p, weight): (Exponent, Vec<f64>) = match self.p {
            Exponent::Inf => (Exponent::Finite(1.0), a.iter().map(|w| 1.0 / w).collect()),
            Exponent::Finite(p) if p == 1.0 => (Exponent::Inf, a.iter().map(|w| 1.0 / w).collect()),
            Exponent::Finite(p) => {
                let q = p / (p - 1.0);
                (
                    Exponent::Finite(q),
                    a.iter().map(|w| w.powf(1.0 - q)).collect(),
                )
            }
        };
        SpaceDescriptor {
            p,
            weight: WeightVector(weight),
            measure: self.measure.clone(),
        }
    }

    pub fn dual_ball(&self) -> DualBall {
        DualBall {
            dual: self.kothe_dual(),
        }
    }

    /// A unit functional `g` in the dual ball with `<f, g> = ||f||`.
    pub fn norming_functional(&self, f: &[f64]) -> Vec<f64> {
        let a = self.weights();
        let mu = self.masses();
        let nrm = self.norm_unchecked(f);
        if nrm == 0.0 {
            return vec![0.0; f.len()];
        }
        match self.p {
            Exponent::Finite(p) if p == 1.0 => f.iter().zip(a).map(|(x, w)| sign(*x) * w).collect(),
            Exponent::Finite(p) => f
                .iter()
                .zip(a)
                .map(|(x, w)| sign(*x) * (x.abs() / nrm).powf(p - 1.0) * w)
                .collect(),
            Exponent::Inf => {
                let k = argmax(f.iter().zip(a).map(|(x, w)| w * x.abs()));
                let mut g = vec![0.0; f.len()];
                g[k] = sign(f[k]) * a[k] / mu[k];
                g
            }
        }
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// First index of the largest value.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// The closed unit ball of a Köthe dual.
#[derive(Clone, Debug, PartialEq)]
pub struct DualBall {
    pub dual: SpaceDescriptor,
}

impl DualBall {
    pub fn norm(&self, g: &[f64]) -> f64 {
        self.dual.norm_unchecked(g)
    }

    pub fn contains(&self, g: &[f64], tol: f64) -> bool {
        g.len() == self.dual.dim() && self.norm(g) <= 1.0 + tol
    }

    /// The ball is a box `|g_i| <= b_i` exactly when the dual is an `L^inf` space.
    pub fn is_box(&self) -> bool {
        self.dual.p == Exponent::Inf
    }

    /// Maximal positive element of a box ball.
    pub fn maximal_element(&self) -> Option<Vec<f64>> {
        self.is_box()
            .then(|| self.dual.weights().iter().map(|w| 1.0 / w).collect())
    }

    /// `sup { g_i : g in ball }`.
    pub fn coordinate_bounds(&self) -> Vec<f64> {
        let n = self.dual.dim();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                1.0 / self.dual.norm_unchecked(&e)
            })
            .collect()
    }

    /// Entrywise clipping for boxes, radial retraction otherwise.
    pub fn project(&self, g: &[f64]) -> Vec<f64> {
        match self.maximal_element() {
            Some(b) => g.iter().zip(&b).map(|(x, m)| x.clamp(-m, *m)).collect(),
            None => {
                let n = self.norm(g);
                if n <= 1.0 {
                    g.to_vec()
                } else {
                    g.iter().map(|x| x / n).collect()
                }
            }
        }
    }
}

/// Randomized lower bound for the `p`-convexity constant `M_(p)(X)`.
pub fn p_convexity_lower_bound(space: &SpaceDescriptor, p: f64, budget: usize, seed: u64) -> f64 {
    let n = space.dim();
    if n == 1 {
        return 1.0;
    }
    let ratio = |family: &[Vec<f64>]| -> f64 {
        let square: Vec<f64> = (0..n)
            .map(|j| {
                family
                    .iter()
                    .map(|f| f[j].abs().powf(p))
                    .sum::<f64>()
                    .powf(1.0 / p)
            })
            .collect();
        let den: f64 = family
            .iter()
            .map(|f| space.norm_unchecked(f).powf(p))
            .sum::<f64>()
            .powf(1.0 / p);
        if den > 0.0 {
            space.norm_unchecked(&square) / den
        } else {
            0.0
        }
    };
    // disjointly supported unit vectors
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0 / space.weights()[i];
            e
        })
        .collect();
    // a single vector already gives ratio one
    let mut best = ratio(&basis).max(1.0);
    for r in 0..budget.max(1) {
        let mut g = rng::stream(seed, "p_convexity", r as u64);
        let k = g.random_range(2..=n.max(2) + 1);
        let family: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                rng::normal_vec(&mut g, n)
                    .into_iter()
                    .map(|x| if g.random_bool(0.5) { x } else { 0.0 })
                    .collect()
            })
            .collect();
        best = best.max(ratio(&family));
    }
    best
}
