//! Brackets for the p-regular norm and the lattice p-summing norm.

use serde::Serialize;

use crate::ascent::{self, AscentConfig};
use crate::error::Result;
use crate::linalg;
use crate::operator::{unit, OperatorModel};
use crate::rng;
use crate::space::{Exponent, SpaceDescriptor};
use crate::synthesis::{
    functional_pool, min_constant_domination, power_dual_ball, synthesize_pietsch_measure,
    Certificate, CertificateFile, DominationCertificate, PietschCertificate, Synthesis,
    SynthesisConfig,
};

/// `(sum_i |x_i|^p)^(1/p)` pointwise.
pub fn power_sum(family: &[Vec<f64>], p: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            if p == 1.0 {
                family.iter().map(|x| x[j].abs()).sum()
            } else {
                let m = family.iter().fold(0.0f64, |a, x| a.max(x[j].abs()));
                if m == 0.0 {
                    0.0
                } else {
                    m * family
                        .iter()
                        .map(|x| (x[j].abs() / m).powf(p))
                        .sum::<f64>()
                        .powf(1.0 / p)
                }
            }
        })
        .collect()
}

fn split(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n).map(|c| c.to_vec()).collect()
}

/// `||(sum |T x_i|^p)^(1/p)||_Y`.
fn image_square(t: &OperatorModel, family: &[Vec<f64>], p: f64) -> f64 {
    let images: Vec<Vec<f64>> = family.iter().map(|x| t.apply_unchecked(x)).collect();
    t.codomain.norm_unchecked(&power_sum(&images, p, t.nrows()))
}

/// Ratio whose supremum over families is the p-regular norm.
pub fn regular_ratio(t: &OperatorModel, family: &[Vec<f64>], p: f64) -> f64 {
    let den = t.domain.norm_unchecked(&power_sum(family, p, t.ncols()));
    if den == 0.0 {
        0.0
    } else {
        image_square(t, family, p) / den
    }
}

/// Upper bound for `sup { (sum |<x_i, x'>|^p)^(1/p) : x' in B_X' }`, exact when
/// `X` has exponent one or infinity, when `p = 1`, or for `p = 2` on `L^2`.
pub fn weak_norm_bound(space: &SpaceDescriptor, family: &[Vec<f64>], p: f64) -> f64 {
    let n = space.dim();
    let k = family.len();
    let a = space.weights();
    let mu = space.masses();
    let sum_p = |xp: &[f64]| -> f64 {
        let s: f64 = family
            .iter()
            .map(|x| space.pairing(x, xp).abs().powf(p))
            .sum();
        s.powf(1.0 / p)
    };
    match space.p {
        Exponent::Finite(q) if q == 1.0 && n <= 14 => {
            return (0..(1usize << (n - 1)))
                .map(|mask| {
                    let xp: Vec<f64> = (0..n)
                        .map(|i| if mask >> i & 1 == 1 { -a[i] } else { a[i] })
                        .collect();
                    sum_p(&xp)
                })
                .fold(0.0, f64::max);
        }
        Exponent::Inf => {
            return (0..n)
                .map(|i| sum_p(&unit(n, i, a[i] / mu[i])))
                .fold(0.0, f64::max);
        }
        _ => {}
    }
    if p == 1.0 && k <= 14 {
        return (0..(1usize << k.saturating_sub(1)))
            .map(|mask| {
                let comb: Vec<f64> = (0..n)
                    .map(|j| {
                        family
                            .iter()
                            .enumerate()
                            .map(|(i, x)| if mask >> i & 1 == 1 { -x[j] } else { x[j] })
                            .sum()
                    })
                    .collect();
                space.norm_unchecked(&comb)
            })
            .fold(0.0, f64::max);
    }
    if p == 2.0 && space.p == Exponent::Finite(2.0) {
        let b = nalgebra::DMatrix::from_fn(k, n, |i, j| family[i][j] * (a[j] * mu[j]).sqrt());
        return linalg::max_eigen(&(b.transpose() * b)).0.max(0.0).sqrt();
    }
    let lattice = space.norm_unchecked(&power_sum(family, p, n));
    let norms: Vec<Vec<f64>> = family
        .iter()
        .map(|x| vec![space.norm_unchecked(x)])
        .collect();
    lattice.min(power_sum(&norms, p, 1)[0])
}

/// Ratio whose supremum over families is the lattice p-summing norm (up to
/// the weak-norm bound used in the denominator).
pub fn lattice_ratio(t: &OperatorModel, family: &[Vec<f64>], p: f64) -> f64 {
    let den = weak_norm_bound(&t.domain, family, p);
    if den == 0.0 {
        0.0
    } else {
        image_square(t, family, p) / den
    }
}

/// Rows of the smallest Hadamard matrix covering `n`, cut to `n` columns.
fn walsh_rows(n: usize) -> Vec<Vec<f64>> {
    let m = n.next_power_of_two();
    (0..m)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if (r & c).count_ones() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect()
}

fn family_starts(n: usize, size: usize, extra: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let pad = |fam: Vec<Vec<f64>>| -> Vec<f64> {
        let mut flat: Vec<f64> = fam.into_iter().take(size).flatten().collect();
        flat.resize(size * n, 0.0);
        flat
    };
    let mut starts = Vec::new();
    if size == 1 {
        starts.extend((0..n).map(|j| unit(n, j, 1.0)));
        starts.push(vec![1.0; n]);
    } else {
        starts.push(pad((0..n).map(|j| unit(n, j, 1.0)).collect()));
        starts.push(pad(walsh_rows(n)));
    }
    for fam in extra {
        if fam.len() == size {
            starts.push(pad(fam.clone()));
        }
    }
    starts
}

fn best_over_sizes(
    t: &OperatorModel,
    family_size: usize,
    budget: usize,
    seed: u64,
    label: &str,
    extra: &[Vec<Vec<f64>>],
    ratio: impl Fn(&[Vec<f64>]) -> f64 + Sync,
) -> (f64, Vec<Vec<f64>>) {
    let n = t.ncols();
    let mut best = (0.0, vec![vec![0.0; n]]);
    for size in 1..=family_size.max(1) {
        let starts = family_starts(n, size, extra);
        let cfg = AscentConfig {
            restarts: budget,
            iterations: 300 + 50 * size,
        };
        let (v, x) = ascent::maximize(
            size * n,
            &starts,
            cfg,
            rng::derive(seed, label, size as u64),
            label,
            |flat| ratio(&split(flat, n)),
        );
        if v > best.0 {
            best = (v, split(&x, n));
        }
    }
    best
}

/// Lower bound for the p-regular norm over families of at most `family_size` vectors.
pub fn rho_lower(
    t: &OperatorModel,
    p: f64,
    family_size: usize,
    budget: usize,
    seed: u64,
) -> (f64, Vec<Vec<f64>>) {
    let witness = vec![t.operator_norm(budget, seed).witness];
    best_over_sizes(
        t,
        family_size,
        budget,
        seed,
        "rho-lower",
        &[witness],
        |fam| regular_ratio(t, fam, p),
    )
}

/// Lower bound for the lattice p-summing norm; never below [`rho_lower`] on the same inputs.
pub fn lambda_lower(
    t: &OperatorModel,
    p: f64,
    family_size: usize,
    budget: usize,
    seed: u64,
) -> (f64, Vec<Vec<f64>>) {
    let (_, rho_family) = rho_lower(t, p, family_size, budget, seed);
    let witness = vec![t.operator_norm(budget, seed).witness];
    best_over_sizes(
        t,
        family_size,
        budget,
        seed,
        "lambda-lower",
        &[rho_family, witness],
        |fam| lattice_ratio(t, fam, p),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantBracket {
    pub lower: f64,
    /// `None` when no certificate could be produced.
    pub upper: Option<f64>,
    pub lower_witness: Vec<Vec<f64>>,
    pub certificate_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConstantBracket {
    pub fn gap(&self) -> Option<f64> {
        self.upper.map(|u| u - self.lower)
    }
}

#[derive(Clone, Debug)]
pub struct UpperBound<C> {
    pub value: Option<f64>,
    pub certificate: Option<C>,
    pub note: Option<String>,
}

fn top_corner(t: &OperatorModel, p: f64) -> Result<Option<Vec<f64>>> {
    Ok(power_dual_ball(&t.codomain, p)?.maximal_element())
}

/// Crude starting ceiling `2^(1/p) n^(1/p) ||T||` from a norm lower bound.
fn crude_ceiling(t: &OperatorModel, p: f64, seed: u64) -> f64 {
    let n = t.ncols() as f64;
    (2.0 * n).powf(1.0 / p) * t.operator_norm(8, seed).lower
}

/// Certified upper bound for the p-regular norm from a dominating weight at
/// the top corner of the codomain's dual power ball.
pub fn rho_upper(
    t: &OperatorModel,
    p: f64,
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<UpperBound<DominationCertificate>> {
    let Some(y) = top_corner(t, p)? else {
        return Ok(UpperBound {
            value: None,
            certificate: None,
            note: Some("codomain dual power ball is not a box".into()),
        });
    };
    power_dual_ball(&t.domain, p)?;
    let lo = rho_lower(t, p, 1, 4, cfg.seed).0;
    let hi = crude_ceiling(t, p, cfg.seed)
        .max(lo * (1.0 + 2.0 * tol))
        .max(1e-300);
    let result = if lo > 0.0 {
        crate::synthesis::domination::min_constant_in(
            t,
            p,
            &y,
            tol,
            cfg,
            Some((lo * (1.0 - tol), hi)),
        )
    } else {
        min_constant_domination(t, p, &y, tol, cfg)
    };
    Ok(match result {
        Ok((c, cert)) => UpperBound {
            value: Some(c),
            certificate: Some(cert),
            note: None,
        },
        Err(e) => UpperBound {
            value: None,
            certificate: None,
            note: Some(e.to_string()),
        },
    })
}

/// Certified upper bound for the lattice p-summing norm from a Pietsch measure
/// over a pool of unit dual functionals.
pub fn lambda_upper(
    t: &OperatorModel,
    p: f64,
    pool_size: usize,
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<UpperBound<PietschCertificate>> {
    let Some(y) = top_corner(t, p)? else {
        return Ok(UpperBound {
            value: None,
            certificate: None,
            note: Some("codomain dual power ball is not a box".into()),
        });
    };
    let pool = functional_pool(&t.domain, pool_size, cfg.seed);
    let attempt = |c: f64| synthesize_pietsch_measure(t, p, &y, c, &pool, cfg);
    if t.is_zero() {
        let cert = attempt(1.0)?.feasible();
        return Ok(UpperBound {
            value: Some(0.0),
            certificate: cert.map(|c| PietschCertificate { c: 0.0, ..c }),
            note: None,
        });
    }
    if p != 2.0 {
        // Away from p = 2 only the coordinate majorant certifies a measure.
        let c = crate::synthesis::pietsch::majorant_constant(t, p, &y);
        return Ok(match attempt(c)? {
            Synthesis::Feasible(cert) => UpperBound {
                value: Some(c),
                certificate: Some(cert),
                note: None,
            },
            _ => UpperBound {
                value: None,
                certificate: None,
                note: Some("no Pietsch measure certified".into()),
            },
        });
    }
    let mut lo = 0.0;
    let mut hi = crude_ceiling(t, p, cfg.seed).max(1e-12);
    let mut best = None;
    for _ in 0..60 {
        match attempt(hi)? {
            Synthesis::Feasible(c) => {
                best = Some(c);
                break;
            }
            _ => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    let Some(mut best) = best else {
        return Ok(UpperBound {
            value: None,
            certificate: None,
            note: Some("no Pietsch measure certified".into()),
        });
    };
    let mut note = None;
    for _ in 0..40 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match attempt(mid)? {
            Synthesis::Feasible(c) => {
                hi = mid;
                best = c;
            }
            Synthesis::Infeasible { .. } => lo = mid,
            Synthesis::Unknown { reason } => {
                lo = mid;
                note = Some(reason);
            }
        }
    }
    Ok(UpperBound {
        value: Some(hi),
        certificate: Some(best),
        note,
    })
}

/// Settings shared by the bracket computations.
#[derive(Clone, Copy, Debug)]
pub struct BracketConfig {
    pub family_size: usize,
    pub budget: usize,
    pub pool_size: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for BracketConfig {
    fn default() -> Self {
        Self {
            family_size: 3,
            budget: 8,
            pool_size: 16,
            tol: 1e-6,
            seed: 0,
        }
    }
}

pub struct Bracketed<C> {
    pub bracket: ConstantBracket,
    pub certificate: Option<CertificateFile>,
    pub raw: Option<C>,
}

fn assemble<C: Clone>(
    t: &OperatorModel,
    lower: (f64, Vec<Vec<f64>>),
    up: UpperBound<C>,
    wrap: impl Fn(C) -> Certificate,
) -> Bracketed<C> {
    let file = up
        .certificate
        .clone()
        .map(|c| CertificateFile::new(wrap(c), t.clone()));
    Bracketed {
        bracket: ConstantBracket {
            lower: lower.0,
            upper: up.value,
            lower_witness: lower.1,
            certificate_id: file.as_ref().and_then(|f| f.id.clone()),
            note: up.note,
        },
        certificate: file,
        raw: up.certificate,
    }
}

pub fn rho_bracket(
    t: &OperatorModel,
    p: f64,
    cfg: &BracketConfig,
) -> Result<Bracketed<DominationCertificate>> {
    let scfg = SynthesisConfig {
        seed: cfg.seed,
        ..Default::default()
    };
    let up = rho_upper(t, p, cfg.tol, &scfg)?;
    let lower = rho_lower(t, p, cfg.family_size, cfg.budget, cfg.seed);
    Ok(assemble(t, lower, up, Certificate::Domination))
}

pub fn lambda_bracket(
    t: &OperatorModel,
    p: f64,
    cfg: &BracketConfig,
) -> Result<Bracketed<PietschCertificate>> {
    let scfg = SynthesisConfig {
        seed: cfg.seed,
        ..Default::default()
    };
    let up = lambda_upper(t, p, cfg.pool_size, cfg.tol, &scfg)?;
    let lower = lambda_lower(t, p, cfg.family_size, cfg.budget, cfg.seed);
    Ok(assemble(t, lower, up, Certificate::Pietsch))
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub p: f64,
    pub quantity: &'static str,
    pub rho: Option<ConstantBracket>,
    pub lambda: Option<ConstantBracket>,
    pub witness: Vec<Vec<f64>>,
    pub certificate_id: Option<String>,
}
