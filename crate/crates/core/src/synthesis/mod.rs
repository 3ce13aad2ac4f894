//! Weight synthesis: dominating weights, Pietsch measures, factorizations.

pub mod certificate;
pub mod domination;
pub mod factorization;
pub mod pietsch;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::OperatorModel;
use crate::space::{DualBall, SpaceDescriptor};

pub use certificate::{verify, Certificate, CertificateFile, VerificationReport};
pub use domination::{
    min_constant_domination, synthesize_dominating_weight, DominationCertificate,
};

pub use factorization::{
    factor_through_weighted_lp, maurey_rosenthal_pipeline, p_dominated_check, FactorizationRecord,
};
pub use pietsch::{default_pool, functional_pool, synthesize_pietsch_measure, PietschCertificate};

/// How a certificate proves its inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact eigenvalue check of the quadratic form (`p = 2`).
    Eigen,
    /// Exact check on the extreme points of the unit ball (`p = 1`).
    Vertex,
    /// Schur-Hölder majorant with a stored test vector.
    Majorant,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Synthesis<C> {
    Feasible(C),
    /// Every admissible weight violates at least one of these cuts.
    Infeasible {
        witnesses: Vec<Vec<f64>>,
    },
    Unknown {
        reason: String,
    },
}

impl<C> Synthesis<C> {
    pub fn feasible(self) -> Option<C> {
        match self {
            Synthesis::Feasible(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Synthesis::Feasible(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Synthesis::Infeasible { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisConfig {
    pub max_cuts: usize,
    /// Multistart restarts for the nonconvex separation oracle.
    pub oracle_budget: usize,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            max_cuts: 200,
            oracle_budget: 12,
            seed: 0,
        }
    }
}

/// Unit ball of `(X_[p])'`, the home of dominating weights.
pub fn power_dual_ball(space: &SpaceDescriptor, p: f64) -> Result<DualBall> {
    Ok(space.pth_power(p)?.dual_ball())
}

pub(crate) fn check_functional(ball: &DualBall, y: &[f64], what: &str) -> Result<()> {
    if y.len() != ball.dual.dim() {
        return Err(Error::DimensionMismatch {
            expected: ball.dual.dim(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Precondition(format!("{what} must be nonnegative")));
    }
    if !ball.contains(y, 1e-9) {
        return Err(Error::Precondition(format!(
            "{what} lies outside its dual ball (norm {})",
            ball.norm(y)
        )));
    }
    Ok(())
}

/// `w_j = y_j nu_j`: the codomain functional as a plain weight on atoms.
pub(crate) fn functional_weights(t: &OperatorModel, y: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(t.codomain.masses())
        .map(|(a, b)| a * b)
        .collect()
}

/// `<|Tf|^p, y>` with `w = y nu`.
pub(crate) fn lhs(t: &OperatorModel, w: &[f64], p: f64, f: &[f64]) -> f64 {
    t.apply_unchecked(f)
        .iter()
        .zip(w)
        .map(|(x, wj)| wj * x.abs().powf(p))
        .sum()
}

/// `sum_i s_i |f_i|^p`.
pub(crate) fn weighted_power(s: &[f64], p: f64, f: &[f64]) -> f64 {
    f.iter().zip(s).map(|(x, si)| si * x.abs().powf(p)).sum()
}

/// Schur-Hölder majorant: for every `f`,
/// `sum_j w_j |Tf|_j^p <= sum_i d_i(t) |f_i|^p` with
/// `d_i(t) = t_i^(1-p) sum_j w_j |T_ji| (|T| t)_j^(p-1)`.
pub(crate) fn majorant(abs_t: &DMatrix<f64>, w: &[f64], t: &[f64], p: f64) -> Vec<f64> {
    let (m, n) = abs_t.shape();
    let row: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|k| abs_t[(j, k)] * t[k]).sum::<f64>())
        .collect();
    (0..n)
        .map(|i| {
            let s: f64 = (0..m)
                .filter(|&j| abs_t[(j, i)] > 0.0 && w[j] > 0.0)
                .map(|j| w[j] * abs_t[(j, i)] * row[j].powf(p - 1.0))
                .sum();
            if s == 0.0 {
                0.0
            } else {
                t[i].powf(1.0 - p) * s
            }
        })
        .collect()
}

/// Test vector `t > 0` making `max_i d_i(t) / s_i` small, by the nonlinear
/// power iteration for `|T|` between `L^p(s)` and `L^p(w)`.
pub(crate) fn schur_vector(abs_t: &DMatrix<f64>, w: &[f64], s: &[f64], p: f64) -> Vec<f64> {
    let n = abs_t.ncols();
    let mut t = vec![1.0; n];
    if p == 1.0 {
        return t;
    }
    let score = |t: &[f64]| {
        majorant(abs_t, w, t, p)
            .iter()
            .zip(s)
            .map(|(d, si)| d / si)
            .fold(0.0, f64::max)
    };
    let mut best = (score(&t), t.clone());
    for _ in 0..2000 {
        let d = majorant(abs_t, w, &t, p);
        let mut next: Vec<f64> = (0..n)
            .map(|i| (d[i] * t[i].powf(p - 1.0) / s[i]).powf(1.0 / (p - 1.0)))
            .collect();
        let top = next.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            break;
        }
        next.iter_mut().for_each(|x| *x = (*x / top).max(1e-12));
        let sc = score(&next);
        let converged = next
            .iter()
            .zip(&t)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * a.max(*b));
        t = next;
        if sc < best.0 {
            best = (sc, t.clone());
        }
        if converged {
            break;
        }
    }
    best.1
}

/// Accumulated cut vectors, normalized and deduplicated.
#[derive(Clone, Debug, Default)]
pub(crate) struct CutPool {
    pub cuts: Vec<Vec<f64>>,
}

impl CutPool {
    /// Normalizes `f` to unit norm in `space`; returns false for duplicates.
    pub fn insert(&mut self, space: &SpaceDescriptor, f: &[f64]) -> bool {
        let nrm = space.norm_unchecked(f);
        if !(nrm > 0.0 && nrm.is_finite()) {
            return false;
        }
        let g: Vec<f64> = f.iter().map(|x| x / nrm).collect();
        let gn = crate::linalg::norm2(&g);
        let dup = self.cuts.iter().any(|c| {
            let cos = crate::linalg::dot(c, &g) / (crate::linalg::norm2(c) * gn);
            cos.abs() > 1.0 - 1e-10
        });
        if !dup {
            self.cuts.push(g);
        }
        !dup
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::space::Exponent;

    #[test]
    fn majorant_dominates_on_random_vectors() {
        let mut g = rng::stream(3, "maj", 0);
        let v = rng::normal_vec(&mut g, 12);
        let t = DMatrix::from_row_slice(3, 4, &v);
        let abs_t = t.abs();
        let w = [0.5, 1.0, 2.0];
        for p in [1.0, 1.5, 3.0] {
            let tv = schur_vector(&abs_t, &w, &[1.0; 4], p);
            let d = majorant(&abs_t, &w, &tv, p);
            for _ in 0..200 {
                let f = rng::normal_vec(&mut g, 4);
                let tf = &t * nalgebra::DVector::from_column_slice(&f);
                let l: f64 = tf.iter().zip(&w).map(|(x, wj)| wj * x.abs().powf(p)).sum();
                assert!(l <= weighted_power(&d, p, &f) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn schur_vector_is_sharp_for_positive_matrices() {
        // |T| = [[2,1],[1,2]] on l^3: norm 3 attained at (1,1)
        let abs_t = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let t = schur_vector(&abs_t, &[1.0, 1.0], &[1.0, 1.0], 3.0);
        let d = majorant(&abs_t, &[1.0, 1.0], &t, 3.0);
        assert!((d[0] - 27.0).abs() < 1e-9 && (d[1] - 27.0).abs() < 1e-9);
    }

    #[test]
    fn cut_pool_rejects_parallel_vectors() {
        let sp = SpaceDescriptor::lp(2, Exponent::Finite(2.0));
        let mut pool = CutPool::default();
        assert!(pool.insert(&sp, &[1.0, 1.0]));
        assert!(!pool.insert(&sp, &[-2.0, -2.0]));
        assert!(pool.insert(&sp, &[1.0, 0.0]));
        assert!(!pool.insert(&sp, &[0.0, 0.0]));
        assert_eq!(pool.len(), 2);
    }
}
