//! Single-weight programs for endomorphisms and their corollaries.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ascent::{self, AscentConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{unit, OperatorModel};
use crate::regularity::rho_upper;
use crate::rng;
use crate::space::{Exponent, SpaceDescriptor, WeightVector};
use crate::synthesis::{
    power_dual_ball, synthesize_dominating_weight, DominationCertificate, Synthesis,
    SynthesisConfig,
};

#[derive(Clone, Debug, Serialize)]
pub struct EndoWeightReport {
    pub p: f64,
    /// Certified constant fed to every step.
    pub step_constant: f64,
    /// Strictly positive weight in the unit ball of the dual power space.
    pub g: Vec<f64>,
    pub truncation: usize,
    /// Dual norm bound of the omitted series terms.
    pub tail_bound: f64,
    /// Factor `max(1, kappa 2^-(N+1))` absorbing the last step.
    pub tail_inflation: f64,
    /// `2^(1/p) C tail_inflation^(1/p)`.
    pub certified_constant: f64,
    /// Norm of the operator on `L^p(g dmu)`: exact for `p` in {1, 2}, a lower bound otherwise.
    pub weighted_norm: f64,
    pub weighted_norm_exact: bool,
    pub g_dual_norm: f64,
    /// Largest normalized violation of any step inequality on a fresh batch.
    pub step_residual: f64,
    /// Largest observed `int |Tf|^p g / int |f|^p g` on the batch.
    pub batch_ratio: f64,
    pub steps: Vec<Vec<f64>>,
    #[serde(skip)]
    pub step_certificates: Vec<DominationCertificate>,
}

/// Series weight `g = (1/2) sum_{i<=N} 2^-i g_i` with `g_{i+1}` a dominating
/// weight for `y* = g_i` at constant `c`.
pub fn endomorphism_weight(
    t: &OperatorModel,
    p: f64,
    c: f64,
    n_terms: usize,
    cfg: &SynthesisConfig,
) -> Result<EndoWeightReport> {
    if t.domain != t.codomain {
        return Err(Error::Precondition(
            "endomorphism weight needs equal domain and codomain".into(),
        ));
    }
    let ball = power_dual_ball(&t.domain, p)?;
    let n = t.ncols();
    let ones = vec![1.0; n];
    let g0 = linalg::scale(&ones, 1.0 / ball.norm(&ones));
    let mut steps = vec![g0.clone()];
    let mut certs = Vec::with_capacity(n_terms + 1);
    for i in 0..=n_terms {
        let y = steps[i].clone();
        let step_cfg = SynthesisConfig {
            seed: rng::derive(cfg.seed, "endo-step", i as u64),
            ..*cfg
        };
        match synthesize_dominating_weight(t, p, &y, c, &step_cfg)? {
            Synthesis::Feasible(cert) => {
                steps.push(cert.z_star.clone());
                certs.push(cert);
            }
            Synthesis::Infeasible { .. } => {
                return Err(Error::Synthesis {
                    step: i,
                    infeasible: true,
                    reason: "constant is below the p-regular norm".into(),
                })
            }
            Synthesis::Unknown { reason } => {
                return Err(Error::Synthesis {
                    step: i,
                    infeasible: false,
                    reason,
                })
            }
        }
    }
    let mut g = vec![0.0; n];
    for (i, gi) in steps.iter().take(n_terms + 1).enumerate() {
        let w = 0.5f64.powi(i as i32 + 1);
        g.iter_mut().zip(gi).for_each(|(a, b)| *a += w * b);
    }
    let bounds = ball.coordinate_bounds();
    let kappa = bounds
        .iter()
        .zip(&g0)
        .map(|(b, g)| b / g)
        .fold(0.0, f64::max);
    let tail_inflation = (kappa * 0.5f64.powi(n_terms as i32 + 1)).max(1.0);
    let certified_constant = (2.0 * tail_inflation).powf(1.0 / p) * c;
    let (weighted_norm, weighted_norm_exact) = weighted_endo_norm(t, &g, p, cfg.seed);
    let (step_residual, batch_ratio) = batch_checks(t, p, c, &steps, &g, cfg.seed);
    Ok(EndoWeightReport {
        p,
        step_constant: c,
        g_dual_norm: ball.norm(&g),
        g,
        truncation: n_terms,
        tail_bound: 0.5f64.powi(n_terms as i32),
        tail_inflation,
        certified_constant,
        weighted_norm,
        weighted_norm_exact,
        step_residual,
        batch_ratio,
        steps,
        step_certificates: certs,
    })
}

/// Norm of `T` acting on `L^p(g dmu)` for a strictly positive `g`.
fn weighted_endo_norm(t: &OperatorModel, g: &[f64], p: f64, seed: u64) -> (f64, bool) {
    let space = SpaceDescriptor::new(
        t.domain.measure.clone(),
        Exponent::Finite(p),
        WeightVector::new(g.to_vec()).expect("finite"),
    )
    .expect("positive weight");
    let op = OperatorModel::new(t.matrix.clone(), space.clone(), space).expect("same shape");
    let est = op.operator_norm(16, seed);
    (est.lower, est.exact)
}

fn batch_checks(
    t: &OperatorModel,
    p: f64,
    c: f64,
    steps: &[Vec<f64>],
    g: &[f64],
    seed: u64,
) -> (f64, f64) {
    let mu = t.domain.masses();
    let cp = c.powf(p);
    let form = |f: &[f64], w: &[f64]| -> f64 {
        f.iter()
            .zip(w)
            .zip(mu)
            .map(|((x, wi), m)| x.abs().powf(p) * wi * m)
            .sum()
    };
    let mut rg = rng::stream(seed, "endo-batch", 0);
    let (mut resid, mut ratio) = (0.0f64, 0.0f64);
    for _ in 0..2000 {
        let f = rng::normal_vec(&mut rg, t.ncols());
        let tf = t.apply_unchecked(&f);
        for i in 0..steps.len() - 1 {
            let l = form(&tf, &steps[i]);
            let r = cp * form(&f, &steps[i + 1]);
            if l > r {
                resid = resid.max((l - r) / l);
            }
        }
        let den = form(&f, g);
        if den > 0.0 {
            ratio = ratio.max(form(&tf, g) / den);
        }
    }
    (resid, ratio)
}

/// Grothendieck-type factor bounding the 2-regular norm of any lattice operator.
pub const KRIVINE_FACTOR: f64 = 1.783;

#[derive(Clone, Debug, Serialize)]
pub struct L2WeightReport {
    pub p: f64,
    /// `"direct"` for `p >= 2`, `"adjoint"` when the weight comes from `T*`.
    pub route: &'static str,
    pub constant_source: &'static str,
    pub constant: f64,
    /// Weight `g` with `T` bounded on `L^2(g dmu)`.
    pub weight: Vec<f64>,
    /// Exact norm of `T` on `L^2(g dmu)`.
    pub l2_norm: f64,
    pub bound: f64,
    pub endo: EndoWeightReport,
}

/// A weight `g` making `T: L^p(mu) -> L^p(mu)` bounded on `L^2(g dmu)`.
pub fn jj_weis_l2_weight(
    t: &OperatorModel,
    n_terms: usize,
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<L2WeightReport> {
    if t.domain != t.codomain {
        return Err(Error::Precondition(
            "the operator must act on a single space".into(),
        ));
    }
    let p = match t.domain.p {
        Exponent::Finite(p) => p,
        Exponent::Inf => return Err(Error::Precondition("finite exponent required".into())),
    };
    if p >= 2.0 {
        let (c, source) = l2_regular_constant(t, p, tol, cfg)?;
        let endo = endomorphism_weight(t, 2.0, c, n_terms, cfg)?;
        let g = endo.g.clone();
        let l2 = l2_norm(t, &g);
        return Ok(L2WeightReport {
            p,
            route: "direct",
            constant_source: source,
            constant: c,
            bound: endo.certified_constant,
            weight: g,
            l2_norm: l2,
            endo,
        });
    }
    let adj = t.adjoint();
    let q = p / (p - 1.0);
    let (c, source) = l2_regular_constant(&adj, q, tol, cfg)?;
    let endo = endomorphism_weight(&adj, 2.0, c, n_terms, cfg)?;
    let g: Vec<f64> = endo.g.iter().map(|x| 1.0 / x).collect();
    let l2 = l2_norm(t, &g);
    Ok(L2WeightReport {
        p,
        route: "adjoint",
        constant_source: source,
        constant: c,
        bound: endo.certified_constant,
        weight: g,
        l2_norm: l2,
        endo,
    })
}

/// Certified 2-regular constant: exact synthesis on `L^2`, otherwise the
/// Krivine factor times a certified norm bound.
fn l2_regular_constant(
    t: &OperatorModel,
    p: f64,
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<(f64, &'static str)> {
    if p == 2.0 {
        if let Some(c) = rho_upper(t, 2.0, tol, cfg)?.value {
            return Ok((c * (1.0 + tol), "certified 2-regular norm"));
        }
    }
    let c = rho_upper(t, p, tol, cfg)?
        .value
        .ok_or_else(|| Error::Precondition("no certified norm bound".into()))?;
    Ok((
        KRIVINE_FACTOR * c * (1.0 + tol),
        "Krivine factor times certified norm",
    ))
}

/// Exact norm of `T` on `L^2(g dmu)` (same measure on both sides).
pub fn l2_norm(t: &OperatorModel, g: &[f64]) -> f64 {
    let mu = t.domain.masses();
    let d: Vec<f64> = g.iter().zip(mu).map(|(a, b)| a * b).collect();
    let m = DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| {
        d[i].sqrt() * t.matrix[(i, j)] / d[j].sqrt()
    });
    linalg::max_eigen(&(m.transpose() * m)).0.max(0.0).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    /// `None` stands for the sup norm.
    pub p: Option<f64>,
    pub norm: f64,
    pub exact: bool,
    pub interpolation_bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AllPWeightReport {
    pub g: Vec<f64>,
    /// Certified bound on `L^1(g dmu)`.
    pub m1: f64,
    /// Norm on `L^inf(g dmu)`, which does not depend on `g`.
    pub m_inf: f64,
    pub grid: Vec<GridPoint>,
    /// Weight obtained from the adjoint at exponent one.
    pub g_adjoint: Vec<f64>,
    pub g_mixed: Vec<f64>,
    /// Exact `L^1` norms of `T` for the mixed weight and of `T*` for the adjoint weight.
    pub mixed_l1_norm: f64,
    pub adjoint_l1_norm: f64,
    pub passed: bool,
}

/// Exact norm of `T` on `L^1(g dmu)`.
fn l1_norm(t: &OperatorModel, g: &[f64]) -> f64 {
    let mu = t.domain.masses();
    (0..t.ncols())
        .map(|i| {
            (0..t.nrows())
                .map(|j| t.matrix[(j, i)].abs() * g[j] * mu[j])
                .sum::<f64>()
                / (g[i] * mu[i])
        })
        .fold(0.0, f64::max)
}

/// One weight `g` with `T` bounded on every `L^p(g dmu)`, checked on `p_grid`
/// (`f64::INFINITY` allowed) against the interpolation bound `M1^(1/p) Minf^(1-1/p)`.
pub fn regular_operator_all_p_weight(
    t: &OperatorModel,
    p_grid: &[f64],
    n_terms: usize,
    tol: f64,
    cfg: &SynthesisConfig,
) -> Result<AllPWeightReport> {
    if t.ncols() != t.nrows() || t.domain.measure != t.codomain.measure {
        return Err(Error::Precondition(
            "the operator must act on a single measure space".into(),
        ));
    }
    let l1 = SpaceDescriptor::on_measure(t.domain.measure.clone(), Exponent::Finite(1.0));
    let t1 = OperatorModel::new(t.matrix.clone(), l1.clone(), l1)?;
    let c1 = rho_upper(&t1, 1.0, tol, cfg)?
        .value
        .ok_or_else(|| Error::Precondition("no L^1 bound".into()))?;
    let endo = endomorphism_weight(&t1, 1.0, c1 * (1.0 + tol), n_terms, cfg)?;
    let g = endo.g.clone();
    let m1 = endo.certified_constant;
    let m_inf = (0..t.nrows())
        .map(|j| t.matrix.row(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut grid = Vec::new();
    for &p in p_grid {
        let (norm, exact, bound) = if p.is_infinite() {
            (m_inf, true, m_inf)
        } else {
            let sp = SpaceDescriptor::new(
                t.domain.measure.clone(),
                Exponent::finite(p)?,
                WeightVector::new(g.clone())?,
            )?;
            let op = OperatorModel::new(t.matrix.clone(), sp.clone(), sp)?;
            let est = op.operator_norm(16, cfg.seed);
            (
                est.lower,
                est.exact,
                m1.powf(1.0 / p) * m_inf.powf(1.0 - 1.0 / p),
            )
        };
        grid.push(GridPoint {
            p: p.is_finite().then_some(p),
            norm,
            exact,
            interpolation_bound: bound,
            passed: norm <= bound * (1.0 + tol),
        });
    }
    let t1s = endo_adjoint_l1(t)?;
    let c_adj = rho_upper(&t1s, 1.0, tol, cfg)?
        .value
        .ok_or_else(|| Error::Precondition("no adjoint bound".into()))?;
    let endo_adj = endomorphism_weight(&t1s, 1.0, c_adj * (1.0 + tol), n_terms, cfg)?;
    let g_adj = endo_adj.g;
    let g_mixed: Vec<f64> = g.iter().zip(&g_adj).map(|(a, b)| 0.5 * (a + b)).collect();
    let passed = grid.iter().all(|x| x.passed);
    Ok(AllPWeightReport {
        mixed_l1_norm: l1_norm(t, &g_mixed),
        adjoint_l1_norm: l1_norm(&t1s, &g_adj),
        g,
        m1,
        m_inf,
        grid,
        g_adjoint: g_adj,
        g_mixed,
        passed,
    })
}

fn endo_adjoint_l1(t: &OperatorModel) -> Result<OperatorModel> {
    let l1 = SpaceDescriptor::on_measure(t.domain.measure.clone(), Exponent::Finite(1.0));
    let adj = t.adjoint();
    OperatorModel::new(adj.matrix, l1.clone(), l1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedNormCheck {
    /// Largest observed `||Tf||_{L^p(v)} / ||f||_{L^p(w)}`; infinite on a null-atom escape.
    pub constant: f64,
    pub exact: bool,
    /// Set when some `f` with `||f||_{L^p(w)} = 0` has `Tf != 0` in `L^p(v)`.
    pub infeasible_direction: bool,
    pub witness: Vec<f64>,
}

/// Norm of `T: L^p(w dmu) -> L^p(v dnu)` for nonnegative weights.
pub fn weighted_norm_verify(
    t: &OperatorModel,
    w: &[f64],
    v: &[f64],
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<WeightedNormCheck> {
    crate::error::check_len(t.ncols(), w.len())?;
    crate::error::check_len(t.nrows(), v.len())?;
    if w.iter().chain(v).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidWeight(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let (n, m) = (t.ncols(), t.nrows());
    let mu = t.domain.masses();
    let nu = t.codomain.masses();
    let s: Vec<f64> = w.iter().zip(mu).map(|(a, b)| a * b).collect();
    let r: Vec<f64> = v.iter().zip(nu).map(|(a, b)| a * b).collect();
    let col_mass =
        |i: usize| -> f64 { (0..m).map(|j| r[j] * t.matrix[(j, i)].abs().powf(p)).sum() };
    if let Some(i) = (0..n).find(|&i| s[i] == 0.0 && col_mass(i) > 0.0) {
        return Ok(WeightedNormCheck {
            constant: f64::INFINITY,
            exact: true,
            infeasible_direction: true,
            witness: unit(n, i, 1.0),
        });
    }
    let keep: Vec<usize> = (0..n).filter(|&i| s[i] > 0.0).collect();
    if keep.is_empty() {
        return Ok(WeightedNormCheck {
            constant: 0.0,
            exact: true,
            infeasible_direction: false,
            witness: vec![0.0; n],
        });
    }
    if p == 1.0 {
        let i = keep
            .iter()
            .copied()
            .max_by(|&a, &b| (col_mass(a) / s[a]).total_cmp(&(col_mass(b) / s[b])))
            .expect("nonempty");
        return Ok(WeightedNormCheck {
            constant: col_mass(i) / s[i],
            exact: true,
            infeasible_direction: false,
            witness: unit(n, i, 1.0),
        });
    }
    if p == 2.0 {
        let k = keep.len();
        let mm = DMatrix::from_fn(m, k, |j, c| {
            r[j].sqrt() * t.matrix[(j, keep[c])] / s[keep[c]].sqrt()
        });
        let (lam, vec) = linalg::max_eigen(&(mm.transpose() * mm));
        let mut witness = vec![0.0; n];
        for (c, &i) in keep.iter().enumerate() {
            witness[i] = vec[c] / s[i].sqrt();
        }
        return Ok(WeightedNormCheck {
            constant: lam.max(0.0).sqrt(),
            exact: true,
            infeasible_direction: false,
            witness,
        });
    }
    let ratio = |f: &[f64]| -> f64 {
        let den: f64 = f.iter().zip(&s).map(|(x, si)| si * x.abs().powf(p)).sum();
        if den == 0.0 {
            return 0.0;
        }
        let num: f64 = t
            .apply_unchecked(f)
            .iter()
            .zip(&r)
            .map(|(x, ri)| ri * x.abs().powf(p))
            .sum();
        (num / den).powf(1.0 / p)
    };
    let mut starts: Vec<Vec<f64>> = keep.iter().map(|&i| unit(n, i, 1.0)).collect();
    starts.push(keep.iter().fold(vec![0.0; n], |mut a, &i| {
        a[i] = 1.0;
        a
    }));
    let (val, x) = ascent::maximize(
        n,
        &starts,
        AscentConfig {
            restarts: trials,
            iterations: 400,
        },
        seed,
        "weighted-norm",
        |f| {
            let mut g = f.to_vec();
            for (i, gi) in g.iter_mut().enumerate() {
                if s[i] == 0.0 {
                    *gi = 0.0;
                }
            }
            ratio(&g)
        },
    );
    let mut witness = x;
    for (i, wi) in witness.iter_mut().enumerate() {
        if s[i] == 0.0 {
            *wi = 0.0;
        }
    }
    Ok(WeightedNormCheck {
        constant: val,
        exact: false,
        infeasible_direction: false,
        witness,
    })
}
