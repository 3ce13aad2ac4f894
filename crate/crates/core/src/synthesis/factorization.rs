//! Factorizations through weighted L^p spaces and p-dominated estimates.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{DominationCertificate, PietschCertificate, SynthesisConfig};
use crate::ascent::{self, AscentConfig};
use crate::error::{Error, Result};
use crate::operator::OperatorModel;
use crate::regularity::{lambda_upper, rho_upper, weak_norm_bound};
use crate::rng;
use crate::space::{Exponent, MeasureSpace, SpaceDescriptor, WeightVector};

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub label: String,
    pub operator: OperatorModel,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationRecord {
    pub stages: Vec<Stage>,
    pub inclusion_norms: Vec<f64>,
    /// Certified or estimated constants keyed by role.
    pub constants: Vec<(String, f64)>,
    /// `max ||composite f - target f|| / ||f||` over a random batch.
    pub reconstruction_residual: f64,
    /// Atoms dropped from middle spaces because the weight vanishes there.
    pub dropped_atoms: Vec<usize>,
}

impl FactorizationRecord {
    pub fn composite(&self) -> DMatrix<f64> {
        let mut it = self.stages.iter();
        let first = it
            .next()
            .expect("at least one stage")
            .operator
            .matrix
            .clone();
        it.fold(first, |acc, s| &s.operator.matrix * acc)
    }
}

/// `L^p(w dmu)` on the atoms where `w > 0`; a single unit atom when none are.
fn restricted(measure: &[f64], w: &[f64], p: f64) -> (SpaceDescriptor, Vec<usize>) {
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    if keep.is_empty() {
        return (SpaceDescriptor::lp(1, Exponent::Finite(p)), keep);
    }
    let m = MeasureSpace::new(keep.iter().map(|&i| measure[i]).collect()).expect("positive masses");
    let a = WeightVector::new(keep.iter().map(|&i| w[i]).collect()).expect("positive weights");
    (
        SpaceDescriptor::new(m, Exponent::Finite(p), a).expect("consistent sizes"),
        keep,
    )
}

fn selection(keep: &[usize], n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(keep.len().max(1), n);
    for (r, &i) in keep.iter().enumerate() {
        s[(r, i)] = 1.0;
    }
    s
}

fn residual(
    target: &OperatorModel,
    composite: &DMatrix<f64>,
    measure: &SpaceDescriptor,
    seed: u64,
) -> f64 {
    let mut g = rng::stream(seed, "reconstruction", 0);
    let n = target.ncols();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let f = rng::normal_vec(&mut g, n);
        let a = target.apply_unchecked(&f);
        let b = composite * nalgebra::DVector::from_column_slice(&f);
        let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        let den = target.domain.norm_unchecked(&f);
        if den > 0.0 {
            worst = worst.max(measure.norm_unchecked(&diff) / den);
        }
    }
    worst
}

/// `X -> L^p(z* dmu) -> L^p(y* dnu)` from a domination certificate; checks
/// that it reproduces `Y -> L^p(y* dnu)` after `T`.
pub fn factor_through_weighted_lp(
    t: &OperatorModel,
    cert: &DominationCertificate,
) -> Result<FactorizationRecord> {
    let p = cert.p;
    let (n, m) = (t.ncols(), t.nrows());
    if cert.z_star.len() != n || cert.y_star.len() != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cert.z_star.len(),
        });
    }
    let (middle, keep_z) = restricted(t.domain.masses(), &cert.z_star, p);
    let (target, keep_y) = restricted(t.codomain.masses(), &cert.y_star, p);
    let sz = selection(&keep_z, n);
    let sy = selection(&keep_y, m);
    let inner = DMatrix::from_fn(sy.nrows(), sz.nrows(), |r, c| {
        if keep_y.is_empty() || keep_z.is_empty() {
            0.0
        } else {
            t.matrix[(keep_y[r], keep_z[c])]
        }
    });
    let i_x = OperatorModel::new(sz, t.domain.clone(), middle.clone())?;
    let t_mid = OperatorModel::new(inner, middle, target.clone())?;
    let i_y = OperatorModel::new(sy, t.codomain.clone(), target.clone())?;
    let xnorm = super::power_dual_ball(&t.domain, p)?
        .norm(&cert.z_star)
        .powf(1.0 / p);
    let ynorm = super::power_dual_ball(&t.codomain, p)?
        .norm(&cert.y_star)
        .powf(1.0 / p);
    let mid_norm = t_mid.operator_norm(8, 1).lower;
    let target_op = i_y.then(t)?;
    let stages = vec![
        Stage {
            label: "inclusion into the weighted domain".into(),
            operator: i_x,
        },
        Stage {
            label: "weighted operator".into(),
            operator: t_mid,
        },
    ];
    let mut rec = FactorizationRecord {
        stages,
        inclusion_norms: vec![xnorm, ynorm],
        constants: vec![
            ("certified".into(), cert.c),
            ("weighted operator norm (lower)".into(), mid_norm),
        ],
        reconstruction_residual: 0.0,
        dropped_atoms: (0..n).filter(|i| !keep_z.contains(i)).collect(),
    };
    rec.reconstruction_residual = residual(&target_op, &rec.composite(), &target, 7);
    Ok(rec)
}

fn multiplier(v: &[f64], power: f64, keep: &[usize], n: usize) -> DMatrix<f64> {
    let mut s = selection(keep, n);
    for (r, &i) in keep.iter().enumerate() {
        s[(r, i)] = v[i].powf(power);
    }
    s
}

/// Certified three-stage factorization of `R0 T0 S0` through unweighted `L^p`
/// spaces: `S1 = M_(z^(1/p)) S0`, `T1 = M_(b^(1/p)) T0 M_(z^(-1/p))`,
/// `R1 = R0 M_(b^(-1/p))`, with `z` a dominating weight for `T0` at the top corner.
pub fn maurey_rosenthal_pipeline(
    s0: &OperatorModel,
    t0: &OperatorModel,
    r0: &OperatorModel,
    p: f64,
    cfg: &SynthesisConfig,
) -> Result<FactorizationRecord> {
    if s0.nrows() != t0.ncols() || t0.nrows() != r0.ncols() {
        return Err(Error::DimensionMismatch {
            expected: t0.ncols(),
            got: s0.nrows(),
        });
    }
    for sp in [&t0.domain, &t0.codomain] {
        if sp.p != Exponent::Finite(p) {
            return Err(Error::Precondition(
                "middle spaces must be weighted L^p with the pipeline exponent".into(),
            ));
        }
    }
    let tol = 1e-7;
    let s_cert: Option<PietschCertificate> = lambda_upper(s0, p, 8, tol, cfg)?.certificate;
    let t_up = rho_upper(t0, p, tol, cfg)?;
    let t_cert = t_up.certificate.ok_or_else(|| {
        Error::Precondition("no regularity certificate for the middle map".into())
    })?;
    let r_cert = if p > 1.0 {
        let q = p / (p - 1.0);
        lambda_upper(&r0.adjoint(), q, 8, tol, cfg)?
            .certificate
            .map(|c| c.c)
    } else {
        None
    };
    let z = &t_cert.z_star;
    let b = t0.codomain.weights();
    let (n, m) = (t0.ncols(), t0.nrows());
    let keep: Vec<usize> = (0..n).filter(|&i| z[i] > 0.0).collect();
    let all: Vec<usize> = (0..m).collect();
    let support: Vec<f64> = z
        .iter()
        .map(|zi| if *zi > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let (mid, _) = restricted(t0.domain.masses(), &support, p);
    let lp_nu = SpaceDescriptor::on_measure(t0.codomain.measure.clone(), Exponent::Finite(p));
    let s1 = OperatorModel::new(
        multiplier(z, 1.0 / p, &keep, n) * &s0.matrix,
        s0.domain.clone(),
        mid.clone(),
    )?;
    let t1_mat = multiplier(b, 1.0 / p, &all, m)
        * &t0.matrix
        * multiplier(z, -1.0 / p, &keep, n).transpose();
    let t1 = OperatorModel::new(t1_mat, mid, lp_nu.clone())?;
    let inv_b: Vec<f64> = b.iter().map(|x| x.powf(-1.0 / p)).collect();
    let r1 = OperatorModel::new(
        &r0.matrix * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(inv_b)),
        lp_nu,
        r0.codomain.clone(),
    )?;
    let target = OperatorModel::new(
        &r0.matrix * &t0.matrix * &s0.matrix,
        s0.domain.clone(),
        r0.codomain.clone(),
    )?;
    let znorm = super::power_dual_ball(&t0.domain, p)?.norm(z).powf(1.0 / p);
    let mut constants = vec![("regular middle map".to_string(), t_cert.c)];
    if let Some(c) = &s_cert {
        constants.push(("lattice summing first map".into(), c.c));
    }
    if let Some(c) = r_cert {
        constants.push(("adjoint lattice summing last map".into(), c));
    }
    constants.push((
        "middle factor norm (lower)".into(),
        t1.operator_norm(8, 2).lower,
    ));
    let mut rec = FactorizationRecord {
        stages: vec![
            Stage {
                label: "first map with weight multiplier".into(),
                operator: s1,
            },
            Stage {
                label: "normalized middle map".into(),
                operator: t1,
            },
            Stage {
                label: "last map with inverse multiplier".into(),
                operator: r1,
            },
        ],
        inclusion_norms: vec![znorm],
        constants,
        reconstruction_residual: 0.0,
        dropped_atoms: (0..n).filter(|i| !keep.contains(i)).collect(),
    };
    rec.reconstruction_residual = residual(&target, &rec.composite(), &r0.codomain, 11);
    Ok(rec)
}

/// Largest observed `sum |<T x_i, y_i*>|` over the product of the weak
/// `l^p` norm of `(x_i)` and the weak `l^p'` norm of `(y_i*)`: a lower bound
/// for the p-dominated constant.
pub fn p_dominated_check(t: &OperatorModel, p: f64, trials: usize, seed: u64) -> f64 {
    if t.is_zero() {
        return 0.0;
    }
    let (n, m) = (t.ncols(), t.nrows());
    let fdual = t.codomain.kothe_dual();
    let q = if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    };
    let mut best: f64 = 0.0;
    for size in 1..=3usize {
        let ratio = |flat: &[f64]| -> f64 {
            let xs: Vec<Vec<f64>> = flat[..size * n].chunks(n).map(|c| c.to_vec()).collect();
            let ys: Vec<Vec<f64>> = flat[size * n..].chunks(m).map(|c| c.to_vec()).collect();
            let num: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| t.codomain.pairing(&t.apply_unchecked(x), y).abs())
                .sum();
            let wx = weak_norm_bound(&t.domain, &xs, p);
            let wy = if q.is_infinite() {
                ys.iter()
                    .map(|y| fdual.norm_unchecked(y))
                    .fold(0.0, f64::max)
            } else {
                weak_norm_bound(&fdual, &ys, q)
            };
            if wx * wy == 0.0 {
                0.0
            } else {
                num / (wx * wy)
            }
        };
        let est = t.operator_norm(4, seed);
        let y = t
            .codomain
            .norming_functional(&t.apply_unchecked(&est.witness));
        let mut start = Vec::new();
        for _ in 0..size {
            start.extend_from_slice(&est.witness);
        }
        for _ in 0..size {
            start.extend_from_slice(&y);
        }
        let cfg = AscentConfig {
            restarts: trials,
            iterations: 200,
        };
        let (v, _) = ascent::maximize(
            size * (n + m),
            &[start],
            cfg,
            rng::derive(seed, "p-dominated", size as u64),
            "pd",
            ratio,
        );
        best = best.max(v);
    }
    best
}
