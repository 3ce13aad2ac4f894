//! Dominating weights: `<|Tf|^p, y*> <= C^p <|f|^p, z*>` for all `f`.

use serde::{Deserialize, Serialize};

use super::{
    check_functional, functional_weights, lhs, majorant, power_dual_ball, schur_vector,
    weighted_power, CutPool, Method, Synthesis, SynthesisConfig,
};
use crate::ascent::{self, AscentConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::operator::{unit, OperatorModel};
use crate::space::DualBall;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominationCertificate {
    #[serde(rename = "C")]
    pub c: f64,
    pub p: f64,
    pub y_star: Vec<f64>,
    /// Density against the domain measure.
    pub z_star: Vec<f64>,
    pub cuts: usize,
    pub residual: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schur_t: Option<Vec<f64>>,
}

pub fn synthesize_dominating_weight(
    t: &OperatorModel,
    p: f64,
    y_star: &[f64],
    c: f64,
    cfg: &SynthesisConfig,
) -> Result<Synthesis<DominationCertificate>> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Precondition(format!(
            "constant must be positive, got {c}"
        )));
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidExponent(format!(
            "regularity exponent {p} must be at least 1"
        )));
    }
    let xball = power_dual_ball(&t.domain, p)?;
    let yball = power_dual_ball(&t.codomain, p)?;
    check_functional(&yball, y_star, "y*")?;
    let problem = Problem {
        t,
        p,
        c,
        w: functional_weights(t, y_star),
        xball,
        cfg,
    };
    let out = if p == 2.0 {
        problem.eigen()
    } else {
        problem.majorant()
    };
    Ok(match out {
        Found::Weight {
            z,
            cuts,
            method,
            schur_t,
        } => {
            let mut cert = DominationCertificate {
                c,
                p,
                y_star: y_star.to_vec(),
                z_star: z,
                cuts,
                residual: 0.0,
                method,
                schur_t,
            };
            cert.residual = super::certificate::domination_residual(t, &cert, cfg.seed, 2000);
            Synthesis::Feasible(cert)
        }
        Found::Empty(witnesses) => Synthesis::Infeasible { witnesses },
        Found::Unknown(reason) => Synthesis::Unknown { reason },
    })
}

/// Smallest certified constant within relative `tol`, with its certificate.
pub fn min_constant_domination(
    t: &OperatorModel,
    p: f64,
    y_star: &[f64],
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<(f64, DominationCertificate)> {
    min_constant_in(t, p, y_star, tol, cfg, None)
}

pub(crate) fn min_constant_in(
    t: &OperatorModel,
    p: f64,
    y_star: &[f64],
    tol: f64,
    cfg: &SynthesisConfig,
    bracket: Option<(f64, f64)>,
) -> Result<(f64, DominationCertificate)> {
    if t.is_zero() || y_star.iter().all(|v| *v == 0.0) {
        power_dual_ball(&t.domain, p)?;
        let cert = DominationCertificate {
            c: 0.0,
            p,
            y_star: y_star.to_vec(),
            z_star: vec![0.0; t.ncols()],
            cuts: 0,
            residual: 0.0,
            method: Method::Vertex,
            schur_t: None,
        };
        return Ok((0.0, cert));
    }
    let attempt = |c: f64| synthesize_dominating_weight(t, p, y_star, c, cfg);
    let (mut lo, mut hi) = bracket.unwrap_or((0.0, 1.0));
    let mut best = None;
    for _ in 0..80 {
        match attempt(hi)? {
            Synthesis::Feasible(cert) => {
                best = Some(cert);
                break;
            }
            _ => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    let mut best = best.ok_or_else(|| Error::Precondition("no certified constant found".into()))?;
    if bracket.is_none() {
        for _ in 0..80 {
            let c = hi / 2.0;
            match attempt(c)? {
                Synthesis::Feasible(cert) => {
                    hi = c;
                    best = cert;
                }
                _ => {
                    lo = c;
                    break;
                }
            }
        }
    }
    for _ in 0..40 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match attempt(mid)? {
            Synthesis::Feasible(cert) => {
                hi = mid;
                best = cert;
            }
            _ => lo = mid,
        }
    }
    Ok((hi, best))
}

/// Largest accepted relative excess of `|Tf|^2` over the weighted form.
const RELATIVE_SLACK: f64 = 1e-12;
/// Box-ball cut loops stop here and blend toward the feasible top corner.
const NEAR_FEASIBLE: f64 = 1e-4;

enum Found {
    Weight {
        z: Vec<f64>,
        cuts: usize,
        method: Method,
        schur_t: Option<Vec<f64>>,
    },
    Empty(Vec<Vec<f64>>),
    Unknown(String),
}

struct Problem<'a> {
    t: &'a OperatorModel,
    p: f64,
    c: f64,
    w: Vec<f64>,
    xball: DualBall,
    cfg: &'a SynthesisConfig,
}

impl Problem<'_> {
    fn mu(&self) -> &[f64] {
        self.t.domain.masses()
    }

    /// LP over accumulated cuts: `min sum z mu` with `z <= upper`.
    fn cut_lp(&self, cuts: &[Vec<f64>], upper: &[f64]) -> LpOutcome {
        let n = self.t.ncols();
        let mu = self.mu();
        let cp = self.c.powf(self.p);
        let mut lp = LinearProgram::minimize(mu.to_vec());
        for i in 0..n {
            lp.push(unit(n, i, 1.0), Relation::Le, upper[i]);
        }
        for f in cuts {
            let row: Vec<f64> = (0..n)
                .map(|i| cp * mu[i] * f[i].abs().powf(self.p))
                .collect();
            lp.push(row, Relation::Ge, lhs(self.t, &self.w, self.p, f));
        }
        lp.solve()
    }

    fn eigen(&self) -> Found {
        let n = self.t.ncols();
        let mu = self.mu().to_vec();
        let g = linalg::gram(&self.t.matrix, &self.w);
        let c2 = self.c * self.c;
        let form = |z: &[f64]| {
            let mut m = -g.clone();
            for i in 0..n {
                m[(i, i)] += c2 * z[i] * mu[i];
            }
            linalg::min_eigen(&m)
        };
        let upper = self.xball.coordinate_bounds();
        let top = linalg::max_eigen(&g).0;
        let scale = if top > 0.0 {
            top
        } else {
            c2 * upper
                .iter()
                .zip(&mu)
                .map(|(b, m)| b * m)
                .fold(0.0, f64::max)
        };
        let eps = 1e-12 * scale;
        let excess = |z: &[f64]| {
            let d: Vec<f64> = z.iter().zip(&mu).map(|(zi, m)| c2 * zi * m).collect();
            linalg::relative_excess(&g, &d)
        };
        let feasible = |z: &[f64]| excess(z).0 <= RELATIVE_SLACK;
        let mut pool = CutPool::default();
        let is_box = self.xball.is_box();

        if is_box {
            let (ex, v) = excess(&upper);
            if ex > RELATIVE_SLACK {
                pool.insert(&self.t.domain, &v);
                return match self.cut_lp(&pool.cuts, &upper) {
                    LpOutcome::Infeasible => Found::Empty(pool.cuts),
                    _ => Found::Unknown("top corner violated but cut LP is nonempty".into()),
                };
            }
            let mut z = upper.clone();
            loop {
                let cand = match self.cut_lp(&pool.cuts, &upper) {
                    LpOutcome::Optimal { x, .. } => x,
                    LpOutcome::Infeasible => return Found::Empty(pool.cuts),
                    _ => break,
                };
                let (ex, v) = excess(&cand);
                if ex <= RELATIVE_SLACK {
                    z = cand;
                    break;
                }
                if ex <= NEAR_FEASIBLE
                    || pool.len() >= self.cfg.max_cuts
                    || !pool.insert(&self.t.domain, &v)
                {
                    z = mix_toward(&cand, &upper, &feasible);
                    break;
                }
            }
            let z = tighten(z, &feasible);
            return Found::Weight {
                z,
                cuts: pool.len(),
                method: super::Method::Eigen,
                schur_t: None,
            };
        }

        // Non-box ball: Kelley cuts on the dual norm, minimizing an epigraph variable.
        let dual = &self.xball.dual;
        let mut tangents: Vec<Vec<f64>> = vec![dual.norming_functional(&upper)];
        loop {
            let mut lp = LinearProgram::minimize({
                let mut c = vec![0.0; n + 1];
                c[n] = 1.0;
                c
            });
            for i in 0..n {
                lp.push(unit(n + 1, i, 1.0), Relation::Le, upper[i]);
            }
            for h in &tangents {
                let mut row: Vec<f64> = (0..n).map(|i| -h[i] * mu[i]).collect();
                row.push(1.0);
                lp.push(row, Relation::Ge, 0.0);
            }
            for f in &pool.cuts {
                let mut row: Vec<f64> = (0..n).map(|i| c2 * mu[i] * f[i] * f[i]).collect();
                row.push(0.0);
                lp.push(row, Relation::Ge, lhs(self.t, &self.w, 2.0, f));
            }
            let (x, s) = match lp.solve() {
                LpOutcome::Optimal { x, objective } => (x, objective),
                LpOutcome::Infeasible => return Found::Empty(pool.cuts),
                _ => return Found::Unknown("cut LP did not terminate".into()),
            };
            if s > 1.0 + 1e-9 {
                return Found::Empty(pool.cuts);
            }
            let z = x[..n].to_vec();
            let (ex, v) = excess(&z);
            if ex > RELATIVE_SLACK {
                if pool.len() >= self.cfg.max_cuts || !pool.insert(&self.t.domain, &v) {
                    // Stalled near the boundary: shift by a constant to clear the deficit.
                    let lam = form(&z).0;
                    let m0 = mu.iter().copied().fold(f64::INFINITY, f64::min);
                    let delta = (-lam).max(0.0) / (c2 * m0) + eps / (c2 * m0);
                    let z: Vec<f64> = z.iter().map(|zi| zi + delta).collect();
                    if feasible(&z) && dual.norm_unchecked(&z) <= 1.0 + 1e-10 {
                        let z = tighten(z, &feasible);
                        return Found::Weight {
                            z,
                            cuts: pool.len(),
                            method: Method::Eigen,
                            schur_t: None,
                        };
                    }
                    return Found::Unknown(format!("cut limit reached after {} cuts", pool.len()));
                }
                continue;
            }
            if dual.norm_unchecked(&z) <= 1.0 + 1e-10 {
                let z = tighten(z, &feasible);
                return Found::Weight {
                    z,
                    cuts: pool.len(),
                    method: Method::Eigen,
                    schur_t: None,
                };
            }
            if tangents.len() >= self.cfg.max_cuts {
                return Found::Unknown("tangent limit reached".into());
            }
            tangents.push(dual.norming_functional(&z));
        }
    }

    fn majorant(&self) -> Found {
        let n = self.t.ncols();
        let mu = self.mu();
        let abs_t = self.t.matrix.abs();
        let cp = self.c.powf(self.p);
        let upper = self.xball.coordinate_bounds();
        let s: Vec<f64> = upper.iter().zip(mu).map(|(b, m)| b * m).collect();
        let tv = schur_vector(&abs_t, &self.w, &s, self.p);
        let d = majorant(&abs_t, &self.w, &tv, self.p);
        let z: Vec<f64> = d.iter().zip(mu).map(|(di, m)| di / (cp * m)).collect();
        let method = if self.p == 1.0 {
            Method::Vertex
        } else {
            Method::Majorant
        };
        let fits = if self.xball.is_box() {
            z.iter().zip(&upper).all(|(zi, b)| *zi <= b * (1.0 + 1e-12))
        } else {
            self.xball.norm(&z) <= 1.0 + 1e-10
        };
        if fits {
            let schur_t = (method == Method::Majorant).then_some(tv);
            return Found::Weight {
                z,
                cuts: 0,
                method,
                schur_t,
            };
        }
        if self.p == 1.0 {
            // The vertex bound is exact; z is the least admissible weight.
            let cuts: Vec<Vec<f64>> = (0..n)
                .map(|i| unit(n, i, 1.0 / self.t.domain.norm_unchecked(&unit(n, i, 1.0))))
                .collect();
            if !self.xball.is_box() {
                return Found::Empty(cuts);
            }
            return match self.cut_lp(&cuts, &upper) {
                LpOutcome::Infeasible => Found::Empty(cuts),
                _ => Found::Unknown("vertex cuts did not separate".into()),
            };
        }
        if !self.xball.is_box() {
            return Found::Unknown("majorant weight leaves the dual ball".into());
        }
        // Search for a cut violated even at the top corner.
        let mut starts: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i, 1.0)).collect();
        starts.push(tv.clone());
        starts.push(vec![1.0; n]);
        let acfg = AscentConfig {
            restarts: self.cfg.oracle_budget,
            iterations: 400,
        };
        let (ratio, f) =
            ascent::maximize(n, &starts, acfg, self.cfg.seed, "domination-oracle", |f| {
                let den = weighted_power(&s, self.p, f);
                if den == 0.0 {
                    0.0
                } else {
                    lhs(self.t, &self.w, self.p, f) / den
                }
            });
        if ratio > cp * (1.0 + 1e-9) {
            let mut pool = CutPool::default();
            pool.insert(&self.t.domain, &f);
            if let LpOutcome::Infeasible = self.cut_lp(&pool.cuts, &upper) {
                return Found::Empty(pool.cuts);
            }
        }
        Found::Unknown(format!(
            "no violation found (best ratio {:.6e} vs {:.6e})",
            ratio, cp
        ))
    }
}

/// Smallest `theta` with `(1-theta) z + theta top` feasible.
fn mix_toward(z: &[f64], top: &[f64], feasible: &impl Fn(&[f64]) -> bool) -> Vec<f64> {
    let at = |th: f64| -> Vec<f64> {
        z.iter()
            .zip(top)
            .map(|(a, b)| (1.0 - th) * a + th * b)
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(&at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

/// Scales `z` down as far as it stays feasible, then lowers each coordinate in
/// turn to its least feasible value.
fn tighten(z: Vec<f64>, feasible: &impl Fn(&[f64]) -> bool) -> Vec<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(&linalg::scale(&z, mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut z = linalg::scale(&z, hi);
    for i in 0..z.len() {
        if z[i] == 0.0 {
            continue;
        }
        let orig = z[i];
        z[i] = 0.0;
        if feasible(&z) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, orig);
        while hi - lo > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            z[i] = mid;
            if feasible(&z) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        z[i] = hi;
    }
    z
}
