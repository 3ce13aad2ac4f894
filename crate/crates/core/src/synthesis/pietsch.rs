//! Pietsch measures: `<|Tf|^p, y*> <= C^p sum_k eta_k |<f, x'_k>|^p`.

use serde::{Deserialize, Serialize};

use super::{
    check_functional, functional_weights, lhs, majorant, power_dual_ball, schur_vector, CutPool,
    Method, Synthesis, SynthesisConfig,
};
use crate::ascent::{self, AscentConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::operator::{unit, OperatorModel};
use crate::rng;
use crate::space::SpaceDescriptor;

/// A finitely supported probability on unit dual functionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PietschMeasure {
    /// Functionals as densities against the domain measure.
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PietschCertificate {
    #[serde(rename = "C")]
    pub c: f64,
    pub p: f64,
    pub y_star: Vec<f64>,
    pub eta: PietschMeasure,
    pub cuts: usize,
    pub residual: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schur_t: Option<Vec<f64>>,
}

/// Unit coordinate functionals of the domain dual.
pub(crate) fn coordinate_functionals(domain: &SpaceDescriptor) -> Vec<Vec<f64>> {
    let dual = domain.kothe_dual();
    let n = domain.dim();
    (0..n)
        .map(|i| unit(n, i, 1.0 / dual.norm_unchecked(&unit(n, i, 1.0))))
        .collect()
}

/// Coordinate functionals, sign patterns (all of them up to 12 atoms) and
/// norming functionals of random directions.
pub fn default_pool(domain: &SpaceDescriptor, seed: u64) -> Vec<Vec<f64>> {
    functional_pool(domain, 4 * domain.dim(), seed)
}

/// As [`default_pool`] with `random` random directions.
pub fn functional_pool(domain: &SpaceDescriptor, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = domain.dim();
    let mut pool = coordinate_functionals(domain);
    if n <= 12 {
        for mask in 1..(1usize << (n - 1)) {
            let s: Vec<f64> = (0..n)
                .map(|i| if (mask << 1) >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            pool.push(domain.norming_functional(&s));
        }
        pool.push(domain.norming_functional(&vec![1.0; n]));
    }
    let mut g = rng::stream(seed, "pietsch-pool", 0);
    for _ in 0..random {
        pool.push(domain.norming_functional(&rng::normal_vec(&mut g, n)));
    }
    pool
}

pub fn synthesize_pietsch_measure(
    t: &OperatorModel,
    p: f64,
    y_star: &[f64],
    c: f64,
    pool: &[Vec<f64>],
    cfg: &SynthesisConfig,
) -> Result<Synthesis<PietschCertificate>> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Precondition(format!(
            "constant must be positive, got {c}"
        )));
    }
    if pool.is_empty() {
        return Err(Error::Precondition("functional pool is empty".into()));
    }
    let dual = t.domain.kothe_dual();
    for x in pool {
        if x.len() != t.ncols() {
            return Err(Error::DimensionMismatch {
                expected: t.ncols(),
                got: x.len(),
            });
        }
        if (dual.norm_unchecked(x) - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(
                "pool functionals must have unit dual norm".into(),
            ));
        }
    }
    let yball = power_dual_ball(&t.codomain, p)?;
    check_functional(&yball, y_star, "y*")?;
    let w = functional_weights(t, y_star);
    let mut state = State {
        t,
        p,
        c,
        w,
        pool: pool.to_vec(),
        cuts: CutPool::default(),
        cfg,
    };
    let found = if p == 2.0 {
        state.eigen()
    } else {
        state.general()
    };
    Ok(match found {
        Ok((support, weights, method, schur_t)) => {
            let mut cert = PietschCertificate {
                c,
                p,
                y_star: y_star.to_vec(),
                eta: PietschMeasure { support, weights },
                cuts: state.cuts.len(),
                residual: 0.0,
                method,
                schur_t,
            };
            cert.residual = super::certificate::pietsch_residual(t, &cert, cfg.seed, 2000);
            Synthesis::Feasible(cert)
        }
        Err(Outcome::Empty) => Synthesis::Infeasible {
            witnesses: state.cuts.cuts,
        },
        Err(Outcome::Unknown(reason)) => Synthesis::Unknown { reason },
    })
}

enum Outcome {
    Empty,
    Unknown(String),
}

type Measure = (Vec<Vec<f64>>, Vec<f64>, Method, Option<Vec<f64>>);

struct State<'a> {
    t: &'a OperatorModel,
    p: f64,
    c: f64,
    w: Vec<f64>,
    pool: Vec<Vec<f64>>,
    cuts: CutPool,
    cfg: &'a SynthesisConfig,
}

impl State<'_> {
    fn evals(&self, f: &[f64]) -> Vec<f64> {
        self.pool
            .iter()
            .map(|x| self.t.domain.pairing(f, x).abs().powf(self.p))
            .collect()
    }

    /// Adds `f` as a cut and its norming functional to the pool.
    fn add_cut(&mut self, f: &[f64]) -> bool {
        let fresh = self.cuts.insert(&self.t.domain, f);
        let x = self.t.domain.norming_functional(f);
        let known = self.pool.iter().any(|y| {
            let cos = linalg::dot(&x, y) / (linalg::norm2(&x) * linalg::norm2(y));
            cos.abs() > 1.0 - 1e-10
        });
        if !known && linalg::norm2(&x) > 0.0 {
            self.pool.push(x);
        }
        fresh
    }

    /// Max-margin LP over the simplex; `None` when every measure violates a cut.
    fn solve_lp(&self) -> std::result::Result<Vec<f64>, Outcome> {
        let k = self.pool.len();
        let cp = self.c.powf(self.p);
        let mut obj = vec![0.0; k + 2];
        obj[k] = -1.0;
        obj[k + 1] = 1.0;
        let mut lp = LinearProgram::minimize(obj);
        let mut simplex = vec![1.0; k + 2];
        simplex[k] = 0.0;
        simplex[k + 1] = 0.0;
        lp.push(simplex, Relation::Eq, 1.0);
        lp.push(unit(k + 2, k, 1.0), Relation::Le, 1.0);
        for f in &self.cuts.cuts {
            let mut row: Vec<f64> = self.evals(f).iter().map(|e| cp * e).collect();
            row.push(-1.0);
            row.push(1.0);
            lp.push(row, Relation::Ge, lhs(self.t, &self.w, self.p, f));
        }
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => {
                if x[k] - x[k + 1] < -1e-9 {
                    Err(Outcome::Empty)
                } else {
                    Ok(x[..k].to_vec())
                }
            }
            _ => Err(Outcome::Unknown("margin LP did not terminate".into())),
        }
    }

    fn finish(&self, eta: Vec<f64>, method: Method) -> Measure {
        let total: f64 = eta.iter().sum();
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for (x, e) in self.pool.iter().zip(&eta) {
            if *e > 0.0 {
                support.push(x.clone());
                weights.push(e / total);
            }
        }
        (support, weights, method, None)
    }

    fn eigen(&mut self) -> std::result::Result<Measure, Outcome> {
        let g = linalg::gram(&self.t.matrix, &self.w);
        let c2 = self.c * self.c;
        let mu = self.t.domain.masses().to_vec();
        let scale = linalg::max_eigen(&g).0.max(1e-300);
        loop {
            let eta = self.solve_lp()?;
            let n = self.t.ncols();
            let mut m = -g.clone();
            for (x, e) in self.pool.iter().zip(&eta) {
                if *e == 0.0 {
                    continue;
                }
                let u: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a * b).collect();
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += c2 * e * u[i] * u[j];
                    }
                }
            }
            let (lam, v) = linalg::min_eigen(&m);
            if lam >= -1e-12 * scale {
                return Ok(self.finish(eta, Method::Eigen));
            }
            if self.cuts.len() >= self.cfg.max_cuts || !self.add_cut(&v) {
                return Err(Outcome::Unknown(format!(
                    "cut limit reached after {} cuts",
                    self.cuts.len()
                )));
            }
        }
    }

    fn general(&mut self) -> std::result::Result<Measure, Outcome> {
        if let Some(found) = self.coordinate_majorant() {
            return Ok(found);
        }
        let n = self.t.ncols();
        let cp = self.c.powf(self.p);
        let acfg = AscentConfig {
            restarts: self.cfg.oracle_budget,
            iterations: 400,
        };
        for round in 0.. {
            let eta = self.solve_lp()?;
            let starts: Vec<Vec<f64>> = (0..n)
                .map(|i| unit(n, i, 1.0))
                .chain(self.cuts.cuts.iter().cloned())
                .collect();
            let (ratio, f) = ascent::maximize(
                n,
                &starts,
                acfg,
                rng::derive(self.cfg.seed, "pietsch", round),
                "oracle",
                |f| {
                    let den: f64 = self.evals(f).iter().zip(&eta).map(|(a, b)| a * b).sum();
                    let num = lhs(self.t, &self.w, self.p, f);
                    if den <= 0.0 {
                        if num > 0.0 {
                            f64::MAX
                        } else {
                            0.0
                        }
                    } else {
                        num / den
                    }
                },
            );
            if ratio <= cp * (1.0 + 1e-9) {
                return Err(Outcome::Unknown(format!(
                    "no violation found for an uncertified measure (best ratio {ratio:.6e})"
                )));
            }
            if self.cuts.len() >= self.cfg.max_cuts || !self.add_cut(&f) {
                return Err(Outcome::Unknown(format!(
                    "cut limit reached after {} cuts",
                    self.cuts.len()
                )));
            }
        }
        unreachable!()
    }

    /// Coordinate functionals with weights from the Schur majorant.
    fn coordinate_majorant(&mut self) -> Option<Measure> {
        let (total, tv, e) = majorant_weights(self.t, &self.w, self.p);
        if total > self.c.powf(self.p) * (1.0 + 1e-12) {
            return None;
        }
        let coords = coordinate_functionals(&self.t.domain);
        if total == 0.0 {
            let n = e.len();
            return Some((coords, vec![1.0 / n as f64; n], Method::Vertex, None));
        }
        let support: Vec<Vec<f64>> = coords
            .into_iter()
            .zip(&e)
            .filter(|(_, v)| **v > 0.0)
            .map(|(x, _)| x)
            .collect();
        let weights: Vec<f64> = e.iter().filter(|v| **v > 0.0).map(|v| v / total).collect();
        let method = if self.p == 1.0 {
            Method::Vertex
        } else {
            Method::Majorant
        };
        let schur_t = (self.p != 1.0).then_some(tv);
        Some((support, weights, method, schur_t))
    }
}

/// Unnormalized coordinate weights `e` with total mass `C^p` from the better of
/// the flat and Schur test vectors.
fn majorant_weights(t: &OperatorModel, w: &[f64], p: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let coords = coordinate_functionals(&t.domain);
    let mu = t.domain.masses();
    let s: Vec<f64> = coords
        .iter()
        .enumerate()
        .map(|(i, x)| (x[i] * mu[i]).powf(p))
        .collect();
    let abs_t = t.matrix.abs();
    [vec![1.0; t.ncols()], schur_vector(&abs_t, w, &s, p)]
        .into_iter()
        .map(|tv| {
            let d = majorant(&abs_t, w, &tv, p);
            let e: Vec<f64> = d.iter().zip(&s).map(|(a, b)| a / b).collect();
            (e.iter().sum::<f64>(), tv, e)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("two candidates")
}

/// Least constant the coordinate majorant certifies for `y*`.
pub(crate) fn majorant_constant(t: &OperatorModel, p: f64, y_star: &[f64]) -> f64 {
    let w = functional_weights(t, y_star);
    majorant_weights(t, &w, p).0.powf(1.0 / p)
}
