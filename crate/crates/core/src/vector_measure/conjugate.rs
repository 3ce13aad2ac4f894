//! Conjugate weight families: synthesis, replay and the p-th power pipeline.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_mT_into, VectorMeasureModel, WeightFamily};
use crate::ascent::{self, AscentConfig};
use crate::error::{check_len, Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::operator::{unit, OperatorModel};
use crate::programs::weighted_norm_verify;
use crate::rng;
use crate::space::{Exponent, MeasureSpace, SpaceDescriptor, WeightVector};
use crate::synthesis::{
    min_constant_domination, power_dual_ball, synthesize_dominating_weight, Certificate,
    CertificateFile, Synthesis, SynthesisConfig,
};

#[derive(Clone, Debug, Serialize)]
pub struct MemberAssignment {
    pub member: usize,
    /// Weight `w` against the control measure.
    pub weight: Vec<f64>,
    /// `w / h` against the Rybakov stand-in `h dnu`; zero on null atoms.
    pub functional: Vec<f64>,
    /// Constant for which the member's domination was certified.
    pub member_constant: f64,
    /// `||i_w: X -> L^p(w)||`.
    pub inclusion_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCheck {
    pub member: usize,
    /// `||T||_{L^p(w) -> L^p(v)}`.
    pub constant: f64,
    pub exact: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateFamilyReport {
    pub p: f64,
    pub uniform_constant: f64,
    pub inclusion_bound: f64,
    pub control_density: Vec<f64>,
    pub assignment: Vec<MemberAssignment>,
    pub verification: Vec<PairCheck>,
    pub certificate_ids: Vec<String>,
    #[serde(skip)]
    pub certificates: Vec<CertificateFile>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConjugateOutcome {
    Conjugate(ConjugateFamilyReport),
    NotConjugatable {
        member: usize,
        witnesses: Vec<Vec<f64>>,
    },
}

impl ConjugateOutcome {
    pub fn report(&self) -> Option<&ConjugateFamilyReport> {
        match self {
            ConjugateOutcome::Conjugate(r) => Some(r),
            ConjugateOutcome::NotConjugatable { .. } => None,
        }
    }
}

/// `T` with its codomain replaced by plain `L^p` on the same measure.
fn into_plain_lp(t: &OperatorModel, p: f64) -> Result<OperatorModel> {
    let cod = SpaceDescriptor::on_measure(t.codomain.measure.clone(), Exponent::finite(p)?);
    OperatorModel::new(t.matrix.clone(), t.domain.clone(), cod)
}

fn check_family(t: &OperatorModel, family: &WeightFamily) -> Result<()> {
    check_len(t.nrows(), family.measure.atom_count())?;
    if family.measure != t.codomain.measure {
        return Err(Error::Precondition(
            "weight family and codomain live on different measures".into(),
        ));
    }
    Ok(())
}

enum Member {
    Weight {
        z: Vec<f64>,
        constant: f64,
        cert: Option<CertificateFile>,
    },
    Empty(Vec<Vec<f64>>),
}

/// For every `v` a weight `w` with `||T||_{L^p(w) -> L^p(v)} <= C` and `w` in the
/// unit ball of `(X_[p])'`. With `constant = None` each member gets its least
/// certified constant and `C` is their maximum.
pub fn conjugate_family_synthesize(
    t: &OperatorModel,
    family: &WeightFamily,
    p: f64,
    constant: Option<f64>,
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<ConjugateOutcome> {
    check_family(t, family)?;
    let plain = into_plain_lp(t, p)?;
    let members: Vec<Result<Member>> = family
        .members
        .par_iter()
        .enumerate()
        .map(|(k, v)| {
            let scale = v.values().iter().copied().fold(0.0, f64::max);
            if scale == 0.0 {
                return Ok(Member::Weight {
                    z: vec![0.0; t.ncols()],
                    constant: 0.0,
                    cert: None,
                });
            }
            let y: Vec<f64> = v.values().iter().map(|x| x / scale).collect();
            let member_cfg = SynthesisConfig {
                seed: rng::derive(cfg.seed, "conjugate-member", k as u64),
                ..*cfg
            };
            let lift = scale.powf(1.0 / p);
            let (c, cert) = match constant {
                Some(c) => {
                    match synthesize_dominating_weight(&plain, p, &y, c / lift, &member_cfg)? {
                        Synthesis::Feasible(cert) => (c, cert),
                        Synthesis::Infeasible { witnesses } => return Ok(Member::Empty(witnesses)),
                        Synthesis::Unknown { reason } => {
                            return Err(Error::Synthesis {
                                step: k,
                                infeasible: false,
                                reason,
                            })
                        }
                    }
                }
                None => {
                    let (c, cert) = min_constant_domination(&plain, p, &y, tol, &member_cfg)?;
                    (c * lift, cert)
                }
            };
            let z = cert.z_star.clone();
            let file = CertificateFile::new(Certificate::Domination(cert), plain.clone());
            Ok(Member::Weight {
                z,
                constant: c,
                cert: Some(file),
            })
        })
        .collect();
    let mut weights = Vec::with_capacity(family.len());
    let mut constants = Vec::with_capacity(family.len());
    let mut certificates = Vec::new();
    for (k, m) in members.into_iter().enumerate() {
        match m? {
            Member::Weight { z, constant, cert } => {
                weights.push(z);
                constants.push(constant);
                certificates.extend(cert);
            }
            Member::Empty(witnesses) => {
                return Ok(ConjugateOutcome::NotConjugatable {
                    member: k,
                    witnesses,
                })
            }
        }
    }
    let uniform = constant.unwrap_or_else(|| constants.iter().copied().fold(0.0, f64::max));
    let mut report = verify_assignment(t, family, &weights, p, Some(uniform), tol, cfg.seed)?;
    for (a, c) in report.assignment.iter_mut().zip(constants) {
        a.member_constant = c;
    }
    report.certificate_ids = certificates.iter().filter_map(|c| c.id.clone()).collect();
    report.certificates = certificates;
    Ok(ConjugateOutcome::Conjugate(report))
}

/// Checks an offered assignment: one weight per member, or a single weight for all.
/// Without a target constant the largest pair constant is reported.
pub fn verify_assignment(
    t: &OperatorModel,
    family: &WeightFamily,
    weights: &[Vec<f64>],
    p: f64,
    constant: Option<f64>,
    tol: f64,
    seed: u64,
) -> Result<ConjugateFamilyReport> {
    check_family(t, family)?;
    if weights.len() != 1 && weights.len() != family.len() {
        return Err(Error::DimensionMismatch {
            expected: family.len(),
            got: weights.len(),
        });
    }
    for w in weights {
        WeightVector::new(w.clone())?;
        check_len(t.ncols(), w.len())?;
    }
    let ball = power_dual_ball(&t.domain, p)?;
    let control = build_mT_into(t, family, p)?.control_density;
    let pick = |k: usize| {
        if weights.len() == 1 {
            &weights[0]
        } else {
            &weights[k]
        }
    };
    let verification: Vec<PairCheck> = (0..family.len())
        .map(|k| {
            let r = weighted_norm_verify(
                t,
                pick(k),
                family.members[k].values(),
                p,
                8,
                rng::derive(seed, "pair", k as u64),
            )?;
            Ok(PairCheck {
                member: k,
                constant: r.constant,
                exact: r.exact,
                passed: true,
            })
        })
        .collect::<Result<_>>()?;
    let uniform =
        constant.unwrap_or_else(|| verification.iter().map(|c| c.constant).fold(0.0, f64::max));
    let verification: Vec<PairCheck> = verification
        .into_iter()
        .map(|c| PairCheck {
            passed: c.constant <= uniform * (1.0 + tol),
            ..c
        })
        .collect();
    let assignment: Vec<MemberAssignment> = (0..family.len())
        .map(|k| {
            let w = pick(k).clone();
            let functional = w
                .iter()
                .zip(&control)
                .map(|(a, h)| if *h > 0.0 { a / h } else { 0.0 })
                .collect();
            MemberAssignment {
                member: k,
                inclusion_norm: ball.norm(&w).powf(1.0 / p),
                functional,
                weight: w,
                member_constant: uniform,
            }
        })
        .collect();
    let inclusion_bound = assignment
        .iter()
        .map(|a| a.inclusion_norm)
        .fold(0.0, f64::max);
    Ok(ConjugateFamilyReport {
        p,
        uniform_constant: uniform,
        passed: verification.iter().all(|c| c.passed),
        inclusion_bound,
        control_density: control,
        assignment,
        verification,
        certificate_ids: Vec::new(),
        certificates: Vec::new(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReplay {
    pub constant: f64,
    /// Largest `(sum_i int |Tf_i|^p v dmu / sum_i w(|f_i|^p))^(1/p)` at the worst member.
    pub ratio: f64,
    /// Largest `||(sum |Tf_i|^p)^(1/p)||_{L^p(m_V)} / ||(sum |f_i|^p)^(1/p)||_X`.
    pub regularity_ratio: f64,
    pub families: usize,
    pub passed: bool,
}

/// Replays the square-function chain: the worst member, its assigned weight,
/// then the domain norm.
pub fn conjugate_family_implies_regularity(
    t: &OperatorModel,
    family: &WeightFamily,
    report: &ConjugateFamilyReport,
    p: f64,
    batch: usize,
    seed: u64,
) -> Result<RegularityReplay> {
    check_family(t, family)?;
    check_len(family.len(), report.assignment.len())?;
    let c = report.uniform_constant;
    let mu = t.domain.masses();
    let mut ratio = 0.0f64;
    for (k, a) in report.assignment.iter().enumerate() {
        let r = weighted_norm_verify(
            t,
            &a.weight,
            family.members[k].values(),
            p,
            8,
            rng::derive(seed, "replay-pair", k as u64),
        )?;
        ratio = ratio.max(r.constant);
    }
    let mut regularity_ratio = 0.0f64;
    let mut g = rng::stream(seed, "regularity-replay", 0);
    for b in 0..batch {
        let k = 1 + b % 4;
        let fs: Vec<Vec<f64>> = (0..k).map(|_| rng::normal_vec(&mut g, t.ncols())).collect();
        let images: Vec<Vec<f64>> = fs.iter().map(|f| t.apply_unchecked(f)).collect();
        let square = |vs: &[Vec<f64>], n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    vs.iter()
                        .map(|v| v[i].abs().powf(p))
                        .sum::<f64>()
                        .powf(1.0 / p)
                })
                .collect()
        };
        let tf = square(&images, t.nrows());
        let f = square(&fs, t.ncols());
        let lhs_by_member: Vec<f64> = family
            .members
            .iter()
            .map(|v| {
                tf.iter()
                    .zip(v.values())
                    .zip(family.measure.masses())
                    .map(|((x, vi), m)| x.abs().powf(p) * vi * m)
                    .sum()
            })
            .collect();
        let (worst, lhs) = lhs_by_member
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty family");
        let w = &report.assignment[worst].weight;
        let rhs: f64 = f
            .iter()
            .zip(w)
            .zip(mu)
            .map(|((x, wi), m)| x.abs().powf(p) * wi * m)
            .sum();
        if lhs > 0.0 {
            ratio = ratio.max(if rhs > 0.0 {
                (lhs / rhs).powf(1.0 / p)
            } else {
                f64::INFINITY
            });
        }
        let den = t.domain.norm_unchecked(&f);
        if den > 0.0 {
            regularity_ratio = regularity_ratio.max(lhs.powf(1.0 / p) / den);
        }
    }
    let passed = ratio <= c * (1.0 + 1e-6)
        && regularity_ratio <= c * report.inclusion_bound.max(1.0) * (1.0 + 1e-6);
    Ok(RegularityReplay {
        constant: c,
        ratio,
        regularity_ratio,
        families: batch,
        passed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PthFactorCheck {
    /// `sup ||Tf|| / || |f|^(1/p) ||_X^p`, the norm of `T` on `X_[p]`.
    pub k: f64,
    pub exact: bool,
    /// `sup ||f||_{L^p(m_T)} / ||f||_X = K^(1/p)`.
    pub inclusion_constant: f64,
    pub bound: Option<f64>,
    pub passed: Option<bool>,
}

pub fn pth_power_factorable_check(
    t: &OperatorModel,
    x: &SpaceDescriptor,
    p: f64,
    bound: Option<f64>,
    budget: usize,
    seed: u64,
) -> Result<PthFactorCheck> {
    check_len(t.ncols(), x.dim())?;
    let op = OperatorModel::new(t.matrix.clone(), x.pth_power(p)?, t.codomain.clone())?;
    let est = op.operator_norm(budget, seed);
    let k = est.lower;
    Ok(PthFactorCheck {
        k,
        exact: est.exact,
        inclusion_constant: k.powf(1.0 / p),
        bound,
        passed: bound.map(|b| k <= b * (1.0 + 1e-9)),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NormingConstants {
    pub c1_lower: f64,
    pub c1_upper: f64,
    pub c1_exact: bool,
    pub c2: f64,
    pub positively_norming: bool,
    /// Vector attaining `c1_upper`.
    pub witness: Vec<f64>,
    /// Largest gap between `sup_N <|x|, n>` and `sup_N <x, s n>` with `s` the sign pattern of `x`.
    pub sign_identity_residual: f64,
}

/// Constants in `c1 ||x|| <= sup_{n in N} <|x|, n> <= c2 ||x||`.
pub fn positively_norming_constants(
    set: &[WeightVector],
    x: &SpaceDescriptor,
    budget: usize,
    seed: u64,
) -> Result<NormingConstants> {
    if set.is_empty() {
        return Err(Error::Precondition("the norming set is empty".into()));
    }
    let dim = x.dim();
    for v in set {
        check_len(dim, v.len())?;
    }
    let mu = x.masses();
    let phi = |y: &[f64]| -> f64 {
        set.iter()
            .map(|n| {
                y.iter()
                    .zip(n.values())
                    .zip(mu)
                    .map(|((a, b), m)| a.abs() * b * m)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    };
    let dual = x.kothe_dual();
    let c2 = set
        .iter()
        .map(|n| dual.norm_unchecked(n.values()))
        .fold(0.0, f64::max);

    let mut starts: Vec<Vec<f64>> = (0..dim).map(|i| unit(dim, i, 1.0)).collect();
    starts.push(vec![1.0; dim]);
    let cfg = AscentConfig {
        restarts: budget,
        iterations: 300,
    };
    let (neg, witness) = ascent::maximize(dim, &starts, cfg, seed, "norming-lower", |y| {
        let d = x.norm_unchecked(y);
        if d == 0.0 {
            f64::NAN
        } else {
            -phi(y) / d
        }
    });
    let witness = crate::linalg::scale(&witness, 1.0 / x.norm_unchecked(&witness));
    let mut c1_upper = (-neg).max(0.0);
    let (c1_lower, c1_exact) = match exact_c1(set, x) {
        Some(v) => {
            c1_upper = c1_upper.min(v);
            (v, true)
        }
        None => (comparison_lower(set, x), false),
    };

    let mut g = rng::stream(seed, "norming-signs", 0);
    let mut samples = vec![witness.clone()];
    samples.extend((0..16).map(|_| rng::normal_vec(&mut g, dim)));
    let sign_identity_residual = samples
        .iter()
        .map(|y| {
            let signed = set
                .iter()
                .map(|n| {
                    y.iter()
                        .zip(n.values())
                        .zip(mu)
                        .map(|((a, b), m)| a * a.signum() * b * m)
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            (signed - phi(y)).abs()
        })
        .fold(0.0, f64::max);
    Ok(NormingConstants {
        c1_lower,
        c1_upper,
        c1_exact,
        c2,
        positively_norming: c1_upper > 1e-12,
        witness,
        sign_identity_residual,
    })
}

/// `inf_{x >= 0, ||x|| = 1} max_n <x, n>` by linear programming, available when
/// the positive part of the unit sphere is a union of polytope faces.
fn exact_c1(set: &[WeightVector], x: &SpaceDescriptor) -> Option<f64> {
    let dim = x.dim();
    let mu = x.masses();
    let a = x.weights();
    let solve = |face: &dyn Fn(&mut LinearProgram)| -> Option<f64> {
        let mut obj = vec![0.0; dim + 1];
        obj[dim] = 1.0;
        let mut lp = LinearProgram::minimize(obj);
        for n in set {
            let mut row: Vec<f64> = n.values().iter().zip(mu).map(|(b, m)| b * m).collect();
            row.push(-1.0);
            lp.push(row, Relation::Le, 0.0);
        }
        face(&mut lp);
        match lp.solve() {
            LpOutcome::Optimal { objective, .. } => Some(objective),
            _ => None,
        }
    };
    match x.p {
        Exponent::Finite(p) if p == 1.0 => solve(&|lp: &mut LinearProgram| {
            let mut row: Vec<f64> = a.iter().zip(mu).map(|(w, m)| w * m).collect();
            row.push(0.0);
            lp.push(row, Relation::Eq, 1.0);
        }),
        Exponent::Inf => (0..dim)
            .filter_map(|i| {
                solve(&|lp: &mut LinearProgram| {
                    for j in 0..dim {
                        let rel = if j == i { Relation::Eq } else { Relation::Le };
                        lp.push(unit(dim + 1, j, a[j]), rel, 1.0);
                    }
                })
            })
            .reduce(f64::min),
        Exponent::Finite(_) => None,
    }
}

/// Lower bound through `||x||_{L^1(a)} >= min_j (a_j mu_j)^(1 - 1/q) ||x||_{L^q(a)}`.
fn comparison_lower(set: &[WeightVector], x: &SpaceDescriptor) -> f64 {
    let Exponent::Finite(q) = x.p else { return 0.0 };
    let l1 = SpaceDescriptor {
        p: Exponent::Finite(1.0),
        ..x.clone()
    };
    let Some(c) = exact_c1(set, &l1) else {
        return 0.0;
    };
    let factor = x
        .weights()
        .iter()
        .zip(x.masses())
        .map(|(a, m)| (a * m).powf(1.0 - 1.0 / q))
        .fold(f64::INFINITY, f64::min);
    c * factor
}

#[derive(Clone, Debug, Serialize)]
pub struct PthPipelineReport {
    pub pth: PthFactorCheck,
    pub conjugate: ConjugateOutcome,
    /// Audit of the produced weights as a norming set for `X_[p]`.
    pub norming: Option<NormingConstants>,
    /// Largest norm of a produced weight in `(X_[p])'`.
    pub dual_ball_factor: Option<f64>,
}

/// `T: X -> L^p(m_V)`: p-th power factorization, conjugate weights, norming audit.
pub fn conjugate_family_pth(
    t: &OperatorModel,
    x: &SpaceDescriptor,
    family: &WeightFamily,
    p: f64,
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<PthPipelineReport> {
    check_len(t.ncols(), x.dim())?;
    let t = OperatorModel::new(t.matrix.clone(), x.clone(), t.codomain.clone())?;
    let pth = pth_power_factorable_check(&t, x, p, None, 16, cfg.seed)?;
    let conjugate = conjugate_family_synthesize(&t, family, p, None, tol, cfg)?;
    let (norming, dual_ball_factor) = match conjugate.report() {
        Some(r) => {
            let xp = x.pth_power(p)?;
            let weights: Vec<WeightVector> = r
                .assignment
                .iter()
                .map(|a| WeightVector::new(a.weight.clone()))
                .collect::<Result<_>>()?;
            let ball = power_dual_ball(x, p)?;
            let factor = r
                .assignment
                .iter()
                .map(|a| ball.norm(&a.weight))
                .fold(0.0, f64::max);
            (
                Some(positively_norming_constants(&weights, &xp, 8, cfg.seed)?),
                Some(factor),
            )
        }
        None => (None, None),
    };
    Ok(PthPipelineReport {
        pth,
        conjugate,
        norming,
        dual_ball_factor,
    })
}

/// A nonnegative kernel sampled on `x`-atoms by `y`-atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelGrid {
    /// `grid[i][j] = K(x_i, y_j)`.
    pub grid: Vec<Vec<f64>>,
    pub x_masses: Vec<f64>,
    pub y_masses: Vec<f64>,
}

/// The integration operator `f -> int f(x) K(x, .) dx` from `L^p(x)` to `L^p(y)`
/// and its measure `m_K(A) = int_A K(x, .) dx` valued in `L^p(m_V)`.
pub fn kernel_vector_measure(
    kernel: &KernelGrid,
    family: &WeightFamily,
    p: f64,
) -> Result<(OperatorModel, VectorMeasureModel)> {
    let xm = MeasureSpace::new(kernel.x_masses.clone())?;
    let ym = MeasureSpace::new(kernel.y_masses.clone())?;
    check_len(xm.atom_count(), kernel.grid.len())?;
    for row in &kernel.grid {
        check_len(ym.atom_count(), row.len())?;
        if row.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::Precondition(
                "kernel values must be finite and nonnegative".into(),
            ));
        }
    }
    if family.measure != ym {
        return Err(Error::Precondition(
            "weight family must live on the y-measure".into(),
        ));
    }
    let e = Exponent::finite(p)?;
    let matrix = DMatrix::from_fn(ym.atom_count(), xm.atom_count(), |j, i| {
        kernel.grid[i][j] * kernel.x_masses[i]
    });
    let t = OperatorModel::new(
        matrix,
        SpaceDescriptor::on_measure(xm, e),
        SpaceDescriptor::on_measure(ym, e),
    )?;
    let m = build_mT_into(&t, family, p)?;
    Ok((t, m))
}

/// `T f = sum_i (int_{A_i} f dmu) chi_{A_i}` from `L^inf(mu)` to `L^2(mu)`.
pub fn partition_averaging(measure: &MeasureSpace, cells: &[Vec<usize>]) -> Result<OperatorModel> {
    let n = measure.atom_count();
    let mut cell_of = vec![usize::MAX; n];
    for (c, cell) in cells.iter().enumerate() {
        for &j in cell {
            if j >= n || cell_of[j] != usize::MAX {
                return Err(Error::Precondition(format!(
                    "cells must partition the {n} atoms"
                )));
            }
            cell_of[j] = c;
        }
    }
    if cell_of.contains(&usize::MAX) {
        return Err(Error::Precondition(format!(
            "cells must partition the {n} atoms"
        )));
    }
    let mu = measure.masses();
    let matrix = DMatrix::from_fn(
        n,
        n,
        |j, k| if cell_of[j] == cell_of[k] { mu[k] } else { 0.0 },
    );
    OperatorModel::new(
        matrix,
        SpaceDescriptor::on_measure(measure.clone(), Exponent::Inf),
        SpaceDescriptor::on_measure(measure.clone(), Exponent::Finite(2.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn cfg() -> SynthesisConfig {
        SynthesisConfig {
            seed: 11,
            ..Default::default()
        }
    }

    fn random_probability(n: usize, seed: u64) -> MeasureSpace {
        let mut g = rng::stream(seed, "vm-test", 0);
        let m: Vec<f64> = (0..n).map(|_| g.random_range(0.5..1.5)).collect();
        let s: f64 = m.iter().sum();
        MeasureSpace::new(m.iter().map(|x| x / s).collect()).unwrap()
    }

    fn unit_ball_members(measure: &MeasureSpace, k: usize, seed: u64) -> WeightFamily {
        let mut g = rng::stream(seed, "vm-members", 0);
        let members = (0..k)
            .map(|_| {
                let v: Vec<f64> = (0..measure.atom_count())
                    .map(|_| g.random_range(0.0..1.0))
                    .collect();
                let l1 = measure.pairing(&v, &vec![1.0; v.len()]);
                let r: f64 = g.random_range(0.2..1.0);
                WeightVector::new(v.iter().map(|x| x * r / l1).collect()).unwrap()
            })
            .collect();
        WeightFamily::new(measure.clone(), members).unwrap()
    }

    fn cells() -> Vec<Vec<usize>> {
        vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7]]
    }

    #[test]
    fn partition_example_constant_at_most_one() {
        let mu = random_probability(8, 1);
        let t = partition_averaging(&mu, &cells()).unwrap();
        let v = unit_ball_members(&mu, 4, 2);
        let out = conjugate_family_synthesize(&t, &v, 2.0, None, 1e-7, &cfg()).unwrap();
        let r = out.report().unwrap();
        assert!(r.passed);
        assert!(r.uniform_constant <= 1.0 + 1e-6, "{}", r.uniform_constant);
        assert!(r.inclusion_bound <= 1.0 + 1e-9);
        let hint = verify_assignment(&t, &v, &[vec![1.0; 8]], 2.0, None, 1e-9, 0).unwrap();
        assert!(hint.uniform_constant <= 1.0 + 1e-9);
        assert!((hint.inclusion_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_operator_gets_its_norm() {
        let s = SpaceDescriptor::lp(3, Exponent::Finite(2.0));
        let t = OperatorModel::from_rows(
            &[
                vec![1.0, 0.5, 0.0],
                vec![0.2, 1.0, 0.3],
                vec![0.0, 0.4, 2.0],
            ],
            s.clone(),
            s.clone(),
        )
        .unwrap();
        let v = WeightFamily::new(
            MeasureSpace::counting(3),
            vec![
                WeightVector::new(vec![1.0, 0.5, 0.2]).unwrap(),
                WeightVector::new(vec![0.3, 1.0, 1.0]).unwrap(),
            ],
        )
        .unwrap();
        let r = conjugate_family_synthesize(&t, &v, 2.0, None, 1e-8, &cfg())
            .unwrap()
            .report()
            .unwrap()
            .clone();
        let norm = v
            .members
            .iter()
            .map(|w| {
                let cod = SpaceDescriptor::new(
                    MeasureSpace::counting(3),
                    Exponent::Finite(2.0),
                    w.clone(),
                )
                .unwrap();
                OperatorModel::new(t.matrix.clone(), s.clone(), cod)
                    .unwrap()
                    .operator_norm(4, 0)
                    .lower
            })
            .fold(0.0, f64::max);
        assert!(
            (r.uniform_constant - norm).abs() <= 1e-6 * norm,
            "{} vs {norm}",
            r.uniform_constant
        );
    }

    #[test]
    fn identity_singleton_returns_member() {
        let s = SpaceDescriptor::on_measure(
            MeasureSpace::new(vec![0.5, 1.0, 2.0]).unwrap(),
            Exponent::Finite(2.0),
        );
        let t = OperatorModel::identity(s);
        let v = WeightFamily::singleton(
            t.codomain.measure.clone(),
            WeightVector::new(vec![0.25, 1.0, 0.5]).unwrap(),
        )
        .unwrap();
        let out = conjugate_family_synthesize(&t, &v, 2.0, None, 1e-9, &cfg()).unwrap();
        let r = out.report().unwrap();
        for (a, b) in r.assignment[0].weight.iter().zip(v.members[0].values()) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
        let replay = conjugate_family_implies_regularity(&t, &v, r, 2.0, 200, 1).unwrap();
        assert!(
            replay.passed && (replay.ratio - 1.0).abs() < 1e-6,
            "{replay:?}"
        );
    }

    #[test]
    fn replay_flags_halved_weights() {
        let mu = random_probability(6, 3);
        let s = SpaceDescriptor::on_measure(mu.clone(), Exponent::Finite(2.0));
        let mut g = rng::stream(4, "vm-op", 0);
        let data: Vec<f64> = rng::normal_vec(&mut g, 36)
            .iter()
            .map(|x| x.abs())
            .collect();
        let t = OperatorModel::new(DMatrix::from_row_slice(6, 6, &data), s.clone(), s).unwrap();
        let v = unit_ball_members(&mu, 3, 5);
        let r = conjugate_family_synthesize(&t, &v, 2.0, None, 1e-8, &cfg())
            .unwrap()
            .report()
            .unwrap()
            .clone();
        let replay = conjugate_family_implies_regularity(&t, &v, &r, 2.0, 300, 6).unwrap();
        assert!(replay.passed, "{replay:?}");
        let mut bad = r.clone();
        bad.assignment
            .iter_mut()
            .for_each(|a| a.weight.iter_mut().for_each(|x| *x *= 0.5));
        let replay = conjugate_family_implies_regularity(&t, &v, &bad, 2.0, 300, 6).unwrap();
        assert!(!replay.passed);
    }

    #[test]
    fn constant_below_threshold_is_not_conjugatable() {
        let s = SpaceDescriptor::lp(2, Exponent::Finite(2.0));
        let t = OperatorModel::identity(s);
        let v = WeightFamily::singleton(MeasureSpace::counting(2), WeightVector::ones(2)).unwrap();
        match conjugate_family_synthesize(&t, &v, 2.0, Some(0.8), 1e-9, &cfg()).unwrap() {
            ConjugateOutcome::NotConjugatable {
                member: 0,
                witnesses,
            } => assert!(!witnesses.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pth_factor_on_lp_is_the_l1_norm() {
        let s = SpaceDescriptor::lp(3, Exponent::Finite(2.0));
        let t = OperatorModel::identity(s.clone());
        let c = pth_power_factorable_check(&t, &s, 2.0, Some(1.0), 8, 0).unwrap();
        assert!((c.k - 1.0).abs() < 1e-12 && c.exact && c.passed == Some(true));
        let mu = MeasureSpace::new(vec![0.25, 0.5]).unwrap();
        let s = SpaceDescriptor::on_measure(mu, Exponent::Finite(2.0));
        let t = OperatorModel::identity(s.clone());
        let c = pth_power_factorable_check(&t, &s, 2.0, None, 8, 0).unwrap();
        assert!((c.k - 2.0).abs() < 1e-12, "{}", c.k);
        let z = OperatorModel::new(DMatrix::zeros(2, 2), s.clone(), s.clone()).unwrap();
        assert_eq!(
            pth_power_factorable_check(&z, &s, 2.0, None, 8, 0)
                .unwrap()
                .k,
            0.0
        );
    }

    #[test]
    fn norming_constants() {
        let n = 4;
        let l1 = SpaceDescriptor::lp(n, Exponent::Finite(1.0));
        let coords: Vec<WeightVector> = (0..n)
            .map(|i| WeightVector::new(unit(n, i, 1.0)).unwrap())
            .collect();
        let c = positively_norming_constants(&coords, &l1, 4, 0).unwrap();
        assert!(
            c.c1_exact && (c.c1_lower - 0.25).abs() < 1e-9 && (c.c2 - 1.0).abs() < 1e-12,
            "{c:?}"
        );
        assert!(c.c1_upper >= c.c1_lower - 1e-9);
        assert!(c.sign_identity_residual < 1e-12);
        let mu = MeasureSpace::new(vec![0.5, 1.5, 1.0]).unwrap();
        let x = SpaceDescriptor::on_measure(mu, Exponent::Finite(1.0));
        let c = positively_norming_constants(&[WeightVector::ones(3)], &x, 4, 0).unwrap();
        assert!((c.c1_lower - 1.0).abs() < 1e-9 && (c.c2 - 1.0).abs() < 1e-12);
        let half = WeightVector::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let c = positively_norming_constants(&[half], &l1, 4, 0).unwrap();
        assert!(!c.positively_norming);
        let l3 = SpaceDescriptor::lp(n, Exponent::Finite(3.0));
        let c = positively_norming_constants(&coords, &l3, 8, 0).unwrap();
        assert!(!c.c1_exact && c.c1_lower <= c.c1_upper + 1e-12);
    }

    #[test]
    fn constant_kernel() {
        let xm = vec![0.5, 0.25, 0.25, 1.0];
        let ym = vec![1.0, 1.0, 0.5];
        let k = KernelGrid {
            grid: vec![vec![1.0; 3]; 4],
            x_masses: xm.clone(),
            y_masses: ym.clone(),
        };
        let v = unit_ball_members(&MeasureSpace::new(ym.clone()).unwrap(), 3, 9);
        let p = 2.0;
        let (t, m) = kernel_vector_measure(&k, &v, p).unwrap();
        assert!(m.is_positive());
        let r = conjugate_family_synthesize(&t, &v, p, None, 1e-9, &cfg())
            .unwrap()
            .report()
            .unwrap()
            .clone();
        let total: f64 = xm.iter().sum();
        let expected = total.powf(1.0 - 1.0 / p) * v.norm_bound().powf(1.0 / p);
        assert!(
            (r.uniform_constant - expected).abs() <= 1e-6 * expected,
            "{} vs {expected}",
            r.uniform_constant
        );
        let zero = KernelGrid {
            grid: vec![vec![0.0; 3]; 4],
            ..k
        };
        let (_, m) = kernel_vector_measure(&zero, &v, p).unwrap();
        assert!(m.values.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn identity_pipeline_constants_are_one() {
        let s = SpaceDescriptor::lp(3, Exponent::Finite(2.0));
        let t = OperatorModel::identity(s.clone());
        let v = WeightFamily::singleton(MeasureSpace::counting(3), WeightVector::ones(3)).unwrap();
        let r = conjugate_family_pth(&t, &s, &v, 2.0, 1e-9, &cfg()).unwrap();
        assert!((r.pth.k - 1.0).abs() < 1e-12);
        let c = r.conjugate.report().unwrap();
        assert!((c.uniform_constant - 1.0).abs() < 1e-6);
        let nrm = r.norming.unwrap();
        assert!((nrm.c1_lower - 1.0).abs() < 1e-6 && (nrm.c2 - 1.0).abs() < 1e-6);
        assert!((r.dual_ball_factor.unwrap() - 1.0).abs() < 1e-6);
    }
}
