//! Finite model of a stable embedding `L^q -> L^p` and the least mass any
//! conjugate weight must carry on it.

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use super::stable::symmetric_stable_vec;
use crate::ascent::{self, AscentConfig};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::operator::{unit, OperatorModel};
use crate::rng;
use crate::space::{Exponent, MeasureSpace, SpaceDescriptor};

/// Largest allowed spread `upper / lower` of the measured embedding constants.
const BRACKET: f64 = 1.1;
const MAX_ROWS: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceConstants {
    /// Lower embedding constant; measured on the model when absent.
    pub k1: Option<f64>,
    /// Bound of the extension `L^p(g) -> L^p`.
    pub c2: f64,
    /// Inclusion constant `L^q -> L^p(g)`; adds upper cuts when present.
    pub c1: Option<f64>,
}

impl Default for EquivalenceConstants {
    fn default() -> Self {
        Self {
            k1: None,
            c2: 1.0,
            c1: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddingModel {
    pub n: usize,
    pub rows: usize,
    /// Stability index actually sampled.
    pub q: f64,
    pub degraded: bool,
    /// Smallest and largest observed `||Tf||_p / ||f||_q`.
    pub lower: f64,
    pub upper: f64,
    pub within_bracket: bool,
    #[serde(skip)]
    pub operator: OperatorModel,
}

/// `T f = sum_j f_j mu_j^(1/q) theta_j` with i.i.d. symmetric `q`-stable columns,
/// from `L^q` of the uniform probability on `n` atoms into `L^p` of the
/// empirical measure on the sample rows, normalized so the constants bracket 1.
pub fn stable_embedding_operator(n: usize, p: f64, q: f64, seed: u64) -> Result<EmbeddingModel> {
    if !(1.0 <= p && p <= q && q <= 2.0) {
        return Err(Error::Precondition(format!(
            "need 1 <= p <= q <= 2, got p = {p}, q = {q}"
        )));
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Precondition(format!(
            "n = {n} is not a power of two"
        )));
    }
    let model = sample_model(n, p, q, seed);
    if model.within_bracket || q == 2.0 {
        return Ok(model);
    }
    warn!("stable sampling at q = {q} did not bracket within {BRACKET}; using Gaussian columns");
    Ok(EmbeddingModel {
        degraded: true,
        ..sample_model(n, p, 2.0, seed)
    })
}

fn sample_model(n: usize, p: f64, q: f64, seed: u64) -> EmbeddingModel {
    let mut rows = (256 * n).min(MAX_ROWS);
    loop {
        let mut g = rng::stream(seed, "stable-embedding", rows as u64);
        let scale = (1.0 / n as f64).powf(1.0 / q);
        let data: Vec<f64> = symmetric_stable_vec(&mut g, q, rows * n)
            .iter()
            .map(|x| x * scale)
            .collect();
        let matrix = DMatrix::from_row_slice(rows, n, &data);
        let domain =
            SpaceDescriptor::on_measure(MeasureSpace::uniform_probability(n), Exponent::Finite(q));
        let codomain = SpaceDescriptor::on_measure(
            MeasureSpace::uniform_probability(rows),
            Exponent::Finite(p),
        );
        let mut t = OperatorModel::new(matrix, domain, codomain).expect("shapes agree");
        let (lo, hi) = embedding_constants(&t, seed);
        let mid = (lo * hi).sqrt();
        t.matrix /= mid;
        let (lower, upper) = (lo / mid, hi / mid);
        let within_bracket = upper <= BRACKET * lower;
        if within_bracket || rows >= MAX_ROWS {
            return EmbeddingModel {
                n,
                rows,
                q,
                degraded: false,
                lower,
                upper,
                within_bracket,
                operator: t,
            };
        }
        rows *= 2;
    }
}

fn embedding_constants(t: &OperatorModel, seed: u64) -> (f64, f64) {
    let n = t.ncols();
    let ratio = |f: &[f64]| {
        let d = t.domain.norm_unchecked(f);
        if d == 0.0 {
            f64::NAN
        } else {
            t.codomain.norm_unchecked(&t.apply_unchecked(f)) / d
        }
    };
    let starts = vec![vec![1.0; n], unit(n, 0, 1.0), unit(n, n - 1, 1.0)];
    let cfg = AscentConfig {
        restarts: 4,
        iterations: 200,
    };
    let (hi, _) = ascent::maximize(n, &starts, cfg, seed, "embedding-upper", ratio);
    let (inv, _) = ascent::maximize(n, &starts, cfg, seed, "embedding-lower", |f| 1.0 / ratio(f));
    (1.0 / inv, hi)
}

#[derive(Clone, Debug, Serialize)]
pub struct MassWitness {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub k1: f64,
    /// Least `int g dmu` over weights meeting every cut; `None` when the cuts are inconsistent.
    pub mass: Option<f64>,
    pub g: Option<Vec<f64>>,
    /// Cell whose lower cut exceeds its upper cut.
    pub conflicting_cell: Option<usize>,
    pub model: EmbeddingModel,
}

/// Minimizes `int g dmu` subject to `int_{A_i} g dmu >= (K1/C2)^p mu(A_i)^(p/q)`
/// on the uniform partition, plus the matching upper cuts when `C1` is known.
pub fn stable_embedding_mass_witness(
    n: usize,
    p: f64,
    q: f64,
    consts: EquivalenceConstants,
    seed: u64,
) -> Result<MassWitness> {
    if !(consts.c2 > 0.0) {
        return Err(Error::Precondition("C2 must be positive".into()));
    }
    let model = stable_embedding_operator(n, p, q, seed)?;
    let k1 = consts.k1.unwrap_or(model.lower);
    let mu = vec![1.0 / n as f64; n];
    let lower = (k1 / consts.c2).powf(p) * (1.0 / n as f64).powf(p / q);
    let mut lp = LinearProgram::minimize(mu.clone());
    for i in 0..n {
        lp.push(unit(n, i, mu[i]), Relation::Ge, lower);
        if let Some(c1) = consts.c1 {
            lp.push(
                unit(n, i, mu[i]),
                Relation::Le,
                c1.powf(p) * mu[i].powf(p / q),
            );
        }
    }
    let (mass, g, conflicting_cell) = match lp.solve() {
        LpOutcome::Optimal { x, objective } => (Some(objective), Some(x), None),
        LpOutcome::Infeasible => {
            let upper = |i: usize| {
                consts
                    .c1
                    .map_or(f64::INFINITY, |c1| c1.powf(p) * mu[i].powf(p / q))
            };
            (None, None, (0..n).find(|&i| lower > upper(i)))
        }
        other => {
            return Err(Error::Precondition(format!(
                "mass program failed: {other:?}"
            )))
        }
    };
    Ok(MassWitness {
        n,
        p,
        q: model.q,
        k1,
        mass,
        g,
        conflicting_cell,
        model,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleRow {
    pub n: usize,
    pub mass: f64,
    pub k1: f64,
    pub lower: f64,
    pub upper: f64,
    pub rows: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleTable {
    pub p: f64,
    pub q: f64,
    pub rows: Vec<CounterexampleRow>,
    /// Least-squares slope of `log mass` against `log n`.
    pub slope: f64,
    pub expected_slope: f64,
    pub strictly_increasing: bool,
}

pub fn counterexample_table(
    ns: &[usize],
    p: f64,
    q: f64,
    consts: EquivalenceConstants,
    seed: u64,
) -> Result<CounterexampleTable> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let w = stable_embedding_mass_witness(n, p, q, consts, seed)?;
        let mass = w
            .mass
            .ok_or_else(|| Error::Precondition(format!("cuts are inconsistent at n = {n}")))?;
        rows.push(CounterexampleRow {
            n,
            mass,
            k1: w.k1,
            lower: w.model.lower,
            upper: w.model.upper,
            rows: w.model.rows,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mass.ln()).collect();
    Ok(CounterexampleTable {
        p,
        q,
        slope: log_log_slope(&xs, &ys),
        expected_slope: 1.0 - p / q,
        strictly_increasing: rows.windows(2).all(|w| w[1].mass > w[0].mass),
        rows,
    })
}

/// Ordinary least-squares slope.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_fit_recovers_a_power_law() {
        let xs: Vec<f64> = [4.0f64, 8.0, 16.0].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = [4.0f64, 8.0, 16.0]
            .iter()
            .map(|x| (3.0 * x.powf(0.7)).ln())
            .collect();
        assert!((log_log_slope(&xs, &ys) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn gaussian_model_brackets() {
        let m = stable_embedding_operator(8, 1.0, 2.0, 1).unwrap();
        assert!(m.within_bracket, "{} {}", m.lower, m.upper);
        assert!(m.lower <= 1.0 && m.upper >= 1.0);
    }

    #[test]
    fn single_cell_mass() {
        let c = EquivalenceConstants {
            k1: Some(0.8),
            c2: 2.0,
            c1: None,
        };
        let w = stable_embedding_mass_witness(1, 1.0, 2.0, c, 0).unwrap();
        assert!((w.mass.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn equal_exponents_give_flat_mass() {
        let c = EquivalenceConstants {
            k1: Some(1.0),
            ..Default::default()
        };
        let t = counterexample_table(&[2, 4, 8], 2.0, 2.0, c, 3).unwrap();
        assert!(t.slope.abs() < 1e-9, "{}", t.slope);
    }

    #[test]
    fn small_inclusion_constant_is_inconsistent() {
        let c = EquivalenceConstants {
            k1: Some(1.0),
            c2: 1.0,
            c1: Some(0.5),
        };
        let w = stable_embedding_mass_witness(4, 1.0, 2.0, c, 0).unwrap();
        assert!(w.mass.is_none() && w.conflicting_cell.is_some());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(stable_embedding_operator(6, 1.0, 2.0, 0).is_err());
        assert!(stable_embedding_operator(4, 2.0, 1.5, 0).is_err());
    }
}
