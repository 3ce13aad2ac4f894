//! Finite vector measures, their integration spaces and conjugate weights.

mod conjugate;
mod counterexample;
mod stable;

pub use conjugate::{
    conjugate_family_implies_regularity, conjugate_family_pth, conjugate_family_synthesize,
    kernel_vector_measure, partition_averaging, positively_norming_constants,
    pth_power_factorable_check, verify_assignment, ConjugateFamilyReport, ConjugateOutcome,
    KernelGrid, MemberAssignment, NormingConstants, PairCheck, PthFactorCheck, PthPipelineReport,
    RegularityReplay,
};
pub use counterexample::{
    counterexample_table, log_log_slope, stable_embedding_mass_witness, stable_embedding_operator,
    CounterexampleRow, CounterexampleTable, EmbeddingModel, EquivalenceConstants, MassWitness,
};
pub use stable::{symmetric_stable, symmetric_stable_vec};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operator::OperatorModel;
use crate::space::{MeasureSpace, SpaceDescriptor, WeightVector};

/// A finite set `V` of nonnegative weights on one measure space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFamily")]
pub struct WeightFamily {
    pub measure: MeasureSpace,
    pub members: Vec<WeightVector>,
    #[serde(skip_serializing)]
    l1_norms: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    measure: MeasureSpace,
    members: Vec<WeightVector>,
}

impl TryFrom<RawFamily> for WeightFamily {
    type Error = Error;
    fn try_from(raw: RawFamily) -> Result<Self> {
        WeightFamily::new(raw.measure, raw.members)
    }
}

impl WeightFamily {
    pub fn new(measure: MeasureSpace, members: Vec<WeightVector>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Precondition(
                "a weight family needs at least one member".into(),
            ));
        }
        for v in &members {
            check_len(measure.atom_count(), v.len())?;
        }
        let l1_norms = members
            .iter()
            .map(|v| measure.pairing(v.values(), &vec![1.0; v.len()]))
            .collect();
        Ok(Self {
            measure,
            members,
            l1_norms,
        })
    }

    pub fn singleton(measure: MeasureSpace, v: WeightVector) -> Result<Self> {
        Self::new(measure, vec![v])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn l1_norms(&self) -> &[f64] {
        &self.l1_norms
    }

    pub fn norm_bound(&self) -> f64 {
        self.l1_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn with_member(&self, v: WeightVector) -> Result<Self> {
        let mut members = self.members.clone();
        members.push(v);
        Self::new(self.measure.clone(), members)
    }
}

/// `sup_{v in V} ||f||_{L^p(v dmu)}`.
pub fn lpmv_norm(f: &[f64], p: f64, family: &WeightFamily) -> Result<f64> {
    check_len(family.measure.atom_count(), f.len())?;
    Ok(lpmv_power(f, p, family).powf(1.0 / p))
}

fn lpmv_power(f: &[f64], p: f64, family: &WeightFamily) -> f64 {
    let mu = family.measure.masses();
    family
        .members
        .iter()
        .map(|v| {
            f.iter()
                .zip(v.values())
                .zip(mu)
                .map(|((x, vi), m)| x.abs().powf(p) * vi * m)
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `phi_v(f) = int f v dmu`.
pub fn phi(v: &WeightVector, measure: &MeasureSpace, f: &[f64]) -> Result<f64> {
    check_len(measure.atom_count(), f.len())?;
    check_len(v.len(), f.len())?;
    Ok(measure.pairing(f, v.values()))
}

/// Where the values of a vector measure live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Codomain {
    Space {
        space: SpaceDescriptor,
    },
    /// `L^p(m_V)`, normed by the finite max over `V`.
    Family {
        family: WeightFamily,
        p: f64,
    },
    /// `l^inf(V)`, one coordinate per member.
    Indexed {
        members: usize,
    },
}

impl Codomain {
    pub fn dim(&self) -> usize {
        match self {
            Codomain::Space { space } => space.dim(),
            Codomain::Family { family, .. } => family.measure.atom_count(),
            Codomain::Indexed { members } => *members,
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            Codomain::Space { space } => space.norm_unchecked(x),
            Codomain::Family { family, p } => lpmv_power(x, *p, family).powf(1.0 / p),
            Codomain::Indexed { .. } => x.iter().fold(0.0, |a, b| a.max(b.abs())),
        }
    }
}

/// A measure on finitely many source atoms: `m(A) = sum_{j in A} m({j})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorMeasureModel {
    /// Control measure on the source atoms.
    pub control: MeasureSpace,
    /// Column `j` is `m({j})`.
    pub values: Vec<Vec<f64>>,
    pub codomain: Codomain,
    /// Density of the control stand-in; zero exactly on null atoms.
    pub control_density: Vec<f64>,
}

impl VectorMeasureModel {
    pub fn new(control: MeasureSpace, values: Vec<Vec<f64>>, codomain: Codomain) -> Result<Self> {
        check_len(control.atom_count(), values.len())?;
        for v in &values {
            check_len(codomain.dim(), v.len())?;
        }
        let norms: Vec<f64> = values.iter().map(|v| codomain.norm(v)).collect();
        let total: f64 = norms.iter().zip(control.masses()).map(|(a, m)| a * m).sum();
        let control_density = if total > 0.0 {
            norms.iter().map(|a| a / total).collect()
        } else {
            vec![0.0; norms.len()]
        };
        Ok(Self {
            control,
            values,
            codomain,
            control_density,
        })
    }

    pub fn source_atoms(&self) -> usize {
        self.values.len()
    }

    /// `m(A)` for a set of source atoms.
    pub fn measure_of(&self, atoms: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.codomain.dim()];
        for &j in atoms {
            out.iter_mut()
                .zip(&self.values[j])
                .for_each(|(a, b)| *a += b);
        }
        out
    }

    /// `int f dm = sum_j f_j m({j})`.
    pub fn integrate(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.codomain.dim()];
        for (fj, col) in f.iter().zip(&self.values) {
            out.iter_mut().zip(col).for_each(|(a, b)| *a += fj * b);
        }
        out
    }

    pub fn null_atoms(&self) -> Vec<usize> {
        (0..self.source_atoms())
            .filter(|&j| self.control_density[j] == 0.0)
            .collect()
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().flatten().all(|x| *x >= 0.0)
    }
}

/// `m_V({j}) = (v_j mu_j)_{v in V}`.
#[allow(non_snake_case)]
pub fn build_mV(family: &WeightFamily) -> VectorMeasureModel {
    let mu = family.measure.masses();
    let values = (0..family.measure.atom_count())
        .map(|j| {
            family
                .members
                .iter()
                .map(|v| v.values()[j] * mu[j])
                .collect()
        })
        .collect();
    VectorMeasureModel::new(
        family.measure.clone(),
        values,
        Codomain::Indexed {
            members: family.len(),
        },
    )
    .expect("shapes agree by construction")
}

/// `m_T(A) = T(chi_A)`, valued in the codomain of `T`.
#[allow(non_snake_case)]
pub fn build_mT(t: &OperatorModel) -> VectorMeasureModel {
    let values = (0..t.ncols())
        .map(|j| t.matrix.column(j).iter().copied().collect())
        .collect();
    VectorMeasureModel::new(
        t.domain.measure.clone(),
        values,
        Codomain::Space {
            space: t.codomain.clone(),
        },
    )
    .expect("shapes agree by construction")
}

/// `m_T` valued in `L^p(m_V)`.
#[allow(non_snake_case)]
pub fn build_mT_into(
    t: &OperatorModel,
    family: &WeightFamily,
    p: f64,
) -> Result<VectorMeasureModel> {
    check_len(t.nrows(), family.measure.atom_count())?;
    let values = (0..t.ncols())
        .map(|j| t.matrix.column(j).iter().copied().collect())
        .collect();
    VectorMeasureModel::new(
        t.domain.measure.clone(),
        values,
        Codomain::Family {
            family: family.clone(),
            p,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdditivityCheck {
    /// `||m(union_{i >= k} A_i)||` for `k = 0..=len`.
    pub tails: Vec<f64>,
    pub nonincreasing: bool,
    pub passed: bool,
}

/// Tail norms of `m` along a disjoint sequence of source-atom sets.
pub fn countable_additivity_check(
    m: &VectorMeasureModel,
    sets: &[Vec<usize>],
) -> Result<AdditivityCheck> {
    let mut seen = vec![false; m.source_atoms()];
    for s in sets {
        for &j in s {
            if j >= seen.len() {
                return Err(Error::Precondition(format!("atom {j} is out of range")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Precondition(format!("atom {j} appears in two sets")));
            }
        }
    }
    let tails: Vec<f64> = (0..=sets.len())
        .map(|k| {
            let atoms: Vec<usize> = sets[k..].iter().flatten().copied().collect();
            m.codomain.norm(&m.measure_of(&atoms))
        })
        .collect();
    let nonincreasing = tails.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let passed = *tails.last().expect("at least one tail") == 0.0;
    Ok(AdditivityCheck {
        tails,
        nonincreasing,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct L1mNorm {
    pub value: f64,
    pub exact: bool,
    pub note: String,
}

/// Largest atom count for which sign patterns are enumerated.
const SIGN_ENUMERATION_LIMIT: usize = 14;

/// `||f||_{L^1(m)} = sup_{x* in B} sum_j |f_j| |<m({j}), x*>|`, computed as the
/// largest codomain norm of `sum_j s_j |f_j| m({j})` over sign patterns `s`.
pub fn l1m_norm(f: &[f64], m: &VectorMeasureModel, budget: usize, seed: u64) -> Result<L1mNorm> {
    check_len(m.source_atoms(), f.len())?;
    let a: Vec<f64> = f.iter().map(|x| x.abs()).collect();
    let active: Vec<usize> = (0..a.len())
        .filter(|&j| a[j] > 0.0 && m.values[j].iter().any(|x| *x != 0.0))
        .collect();
    let eval = |signs: &[f64]| -> f64 {
        let mut g = vec![0.0; a.len()];
        for (k, &j) in active.iter().enumerate() {
            g[j] = signs[k] * a[j];
        }
        m.codomain.norm(&m.integrate(&g))
    };
    if active.is_empty() {
        return Ok(L1mNorm {
            value: 0.0,
            exact: true,
            note: "zero integrand".into(),
        });
    }
    if m.is_positive() {
        return Ok(L1mNorm {
            value: eval(&vec![1.0; active.len()]),
            exact: true,
            note: "positive measure".into(),
        });
    }
    let k = active.len();
    if k <= SIGN_ENUMERATION_LIMIT {
        let mut best = 0.0f64;
        for mask in 0..(1u32 << (k - 1)) {
            let signs: Vec<f64> = (0..k)
                .map(|b| {
                    if b > 0 && mask >> (b - 1) & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                })
                .collect();
            best = best.max(eval(&signs));
        }
        return Ok(L1mNorm {
            value: best,
            exact: true,
            note: "sign patterns enumerated".into(),
        });
    }
    let mut rng = crate::rng::stream(seed, "l1m", 0);
    let mut best = 0.0f64;
    for _ in 0..budget.max(1) {
        let mut signs: Vec<f64> = crate::rng::normal_vec(&mut rng, k)
            .iter()
            .map(|x| x.signum())
            .collect();
        let mut cur = eval(&signs);
        loop {
            let mut improved = false;
            for i in 0..k {
                signs[i] = -signs[i];
                let v = eval(&signs);
                if v > cur {
                    cur = v;
                    improved = true;
                } else {
                    signs[i] = -signs[i];
                }
            }
            if !improved {
                break;
            }
        }
        best = best.max(cur);
    }
    Ok(L1mNorm {
        value: best,
        exact: false,
        note: format!("local sign search from {} starts", budget.max(1)),
    })
}

/// `||f||_{L^p(m)} = ||f|^p|_{L^1(m)}^(1/p)`.
pub fn lpm_norm(
    f: &[f64],
    p: f64,
    m: &VectorMeasureModel,
    budget: usize,
    seed: u64,
) -> Result<L1mNorm> {
    let g: Vec<f64> = f.iter().map(|x| x.abs().powf(p)).collect();
    let r = l1m_norm(&g, m, budget, seed)?;
    Ok(L1mNorm {
        value: r.value.powf(1.0 / p),
        ..r
    })
}
