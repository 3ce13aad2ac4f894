//! Dense matrix operators between weighted spaces.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ascent::{self, AscentConfig};
use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::space::{Exponent, SpaceDescriptor};

/// `T : domain -> codomain` given by an `m x n` matrix acting on atom values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOperator", into = "RawOperator")]
pub struct OperatorModel {
    pub matrix: DMatrix<f64>,
    pub domain: SpaceDescriptor,
    pub codomain: SpaceDescriptor,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    matrix: Vec<Vec<f64>>,
    domain: SpaceDescriptor,
    codomain: SpaceDescriptor,
}

impl TryFrom<RawOperator> for OperatorModel {
    type Error = Error;
    fn try_from(raw: RawOperator) -> Result<Self> {
        OperatorModel::from_rows(&raw.matrix, raw.domain, raw.codomain)
    }
}

impl From<OperatorModel> for RawOperator {
    fn from(t: OperatorModel) -> Self {
        RawOperator {
            matrix: t.rows(),
            domain: t.domain,
            codomain: t.codomain,
        }
    }
}

/// A norm lower bound together with the vector achieving it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub lower: f64,
    pub witness: Vec<f64>,
    /// True when the value is the exact norm (spectral or vertex enumeration).
    pub exact: bool,
}

impl OperatorModel {
    pub fn new(
        matrix: DMatrix<f64>,
        domain: SpaceDescriptor,
        codomain: SpaceDescriptor,
    ) -> Result<Self> {
        check_len(codomain.dim(), matrix.nrows())?;
        check_len(domain.dim(), matrix.ncols())?;
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition(
                "operator entries must be finite".into(),
            ));
        }
        Ok(Self {
            matrix,
            domain,
            codomain,
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        domain: SpaceDescriptor,
        codomain: SpaceDescriptor,
    ) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(m, n, &flat), domain, codomain)
    }

    pub fn identity(space: SpaceDescriptor) -> Self {
        let n = space.dim();
        Self {
            matrix: DMatrix::identity(n, n),
            domain: space.clone(),
            codomain: space,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols(), f.len())?;
        Ok(self.apply_unchecked(f))
    }

    pub(crate) fn apply_unchecked(&self, f: &[f64]) -> Vec<f64> {
        let (m, n) = self.matrix.shape();
        (0..m)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * f[j]).sum())
            .collect()
    }

    /// Adjoint for the base-measure pairings: `<Tf, g>_nu = <f, T*g>_mu`.
    pub fn adjoint(&self) -> OperatorModel {
        let mu = self.domain.masses();
        let nu = self.codomain.masses();
        let (m, n) = self.matrix.shape();
        let matrix = DMatrix::from_fn(n, m, |i, j| self.matrix[(j, i)] * nu[j] / mu[i]);
        OperatorModel {
            matrix,
            domain: self.codomain.kothe_dual(),
            codomain: self.domain.kothe_dual(),
        }
    }

    /// Entrywise modulus `|T|`.
    pub fn modulus(&self) -> OperatorModel {
        self.map_entries(f64::abs)
    }

    /// `T+ = (|T| + T) / 2`.
    pub fn positive_part(&self) -> OperatorModel {
        self.map_entries(|x| x.max(0.0))
    }

    /// `T- = (|T| - T) / 2`.
    pub fn negative_part(&self) -> OperatorModel {
        self.map_entries(|x| (-x).max(0.0))
    }

    pub fn scaled(&self, alpha: f64) -> OperatorModel {
        self.map_entries(|x| alpha * x)
    }

    pub fn is_positive(&self) -> bool {
        self.matrix.iter().all(|x| *x >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|x| *x == 0.0)
    }

    fn map_entries(&self, f: impl Fn(f64) -> f64) -> OperatorModel {
        OperatorModel {
            matrix: self.matrix.map(f),
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
        }
    }

    /// `T` followed by `S`.
    pub fn then(&self, s: &OperatorModel) -> Result<OperatorModel> {
        check_len(s.ncols(), self.nrows())?;
        OperatorModel::new(
            &s.matrix * &self.matrix,
            self.domain.clone(),
            s.codomain.clone(),
        )
    }

    fn ratio(&self, f: &[f64]) -> f64 {
        let d = self.domain.norm_unchecked(f);
        if d == 0.0 {
            return 0.0;
        }
        self.codomain.norm_unchecked(&self.apply_unchecked(f)) / d
    }

    /// Lower bound for `||T||` with a witness. Exact when both exponents are
    /// two (generalized spectral value), when the domain exponent is one
    /// (columns), or for an `L^inf` domain with at most 16 atoms (vertices).
    pub fn operator_norm(&self, budget: usize, seed: u64) -> NormEstimate {
        let n = self.ncols();
        let a = self.domain.weights();
        let mu = self.domain.masses();
        match (self.domain.p, self.codomain.p) {
            (Exponent::Finite(p), Exponent::Finite(q)) if p == 2.0 && q == 2.0 => {
                let w: Vec<f64> = self
                    .codomain
                    .weights()
                    .iter()
                    .zip(self.codomain.masses())
                    .map(|(b, m)| b * m)
                    .collect();
                let s: Vec<f64> = a
                    .iter()
                    .zip(mu)
                    .map(|(x, m)| 1.0 / (x * m).sqrt())
                    .collect();
                let g = linalg::congruence(&linalg::gram(&self.matrix, &w), &s);
                let (lmax, v) = linalg::max_eigen(&g);
                let witness: Vec<f64> = v.iter().zip(&s).map(|(x, si)| x * si).collect();
                return NormEstimate {
                    lower: lmax.max(0.0).sqrt(),
                    witness,
                    exact: true,
                };
            }
            (Exponent::Finite(p), _) if p == 1.0 => {
                return self.best_of((0..n).map(|j| unit(n, j, 1.0)), true);
            }
            (Exponent::Inf, _) if n <= 16 => {
                let verts = (0..(1usize << n)).map(|mask| {
                    (0..n)
                        .map(|i| {
                            if mask >> i & 1 == 1 {
                                -1.0 / a[i]
                            } else {
                                1.0 / a[i]
                            }
                        })
                        .collect::<Vec<f64>>()
                });
                return self.best_of(verts, true);
            }
            _ => {}
        }
        let mut starts: Vec<Vec<f64>> = (0..n).map(|j| unit(n, j, 1.0)).collect();
        starts.push(vec![1.0; n]);
        let (v, x) = ascent::maximize(
            n,
            &starts,
            AscentConfig {
                restarts: budget,
                iterations: 300,
            },
            seed,
            "operator_norm",
            |f| self.ratio(f),
        );
        NormEstimate {
            lower: v.max(0.0),
            witness: x,
            exact: false,
        }
    }

    fn best_of(&self, cands: impl Iterator<Item = Vec<f64>>, exact: bool) -> NormEstimate {
        let mut best = NormEstimate {
            lower: 0.0,
            witness: vec![0.0; self.ncols()],
            exact,
        };
        for f in cands {
            let r = self.ratio(&f);
            if r > best.lower {
                best.lower = r;
                best.witness = f;
            }
        }
        best
    }
}

pub(crate) fn unit(n: usize, j: usize, value: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = value;
    e
}
