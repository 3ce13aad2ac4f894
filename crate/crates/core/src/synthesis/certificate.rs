//! Certificate files, content ids and independent re-verification.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    functional_weights, lhs, majorant, power_dual_ball, weighted_power, DominationCertificate,
    Method, PietschCertificate,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::OperatorModel;
use crate::rng;

/// Batch residuals above this fail verification.
pub const VERIFY_TOL: f64 = 1e-8;
/// Exact rechecks recompute the certified inequality from the stored data, so
/// only rounding is tolerated.
pub const EXACT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    Domination(DominationCertificate),
    Pietsch(PietschCertificate),
}

impl Certificate {
    pub fn constant(&self) -> f64 {
        match self {
            Certificate::Domination(c) => c.c,
            Certificate::Pietsch(c) => c.c,
        }
    }
}

/// A certificate bundled with the operator it speaks about.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    #[serde(default)]
    pub id: Option<String>,
    pub certificate: Certificate,
    pub operator: OperatorModel,
}

#[derive(Serialize)]
struct Body<'a> {
    certificate: &'a Certificate,
    operator: &'a OperatorModel,
}

impl CertificateFile {
    pub fn new(certificate: Certificate, operator: OperatorModel) -> Self {
        let mut file = Self {
            id: None,
            certificate,
            operator,
        };
        file.id = Some(file.content_id());
        file
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON body.
    pub fn content_id(&self) -> String {
        let body = serde_json::to_vec(&Body {
            certificate: &self.certificate,
            operator: &self.operator,
        })
        .expect("certificate bodies serialize");
        hex::encode(Sha256::digest(&body))[..16].to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub id: String,
    pub id_matches: bool,
    pub kind: &'static str,
    pub constant: f64,
    pub admissible: bool,
    pub exact_residual: Option<f64>,
    pub batch_residual: f64,
    pub batch: usize,
    pub passed: bool,
}

/// Re-checks a stored certificate with a fresh random batch. Files without an
/// id are rejected.
pub fn verify(file: &CertificateFile, seed: u64, batch: usize) -> Result<VerificationReport> {
    let id = file
        .id
        .clone()
        .ok_or_else(|| Error::Schema("certificate id is missing".into()))?;
    let id_matches = id == file.content_id();
    let t = &file.operator;
    let (kind, checks) = match &file.certificate {
        Certificate::Domination(c) => ("domination", check_domination(t, c, seed, batch)),
        Certificate::Pietsch(c) => ("pietsch", check_pietsch(t, c, seed, batch)),
    };
    let exact_ok = checks.exact.is_none_or(|r| r <= EXACT_TOL);
    let passed = id_matches && checks.admissible && exact_ok && checks.batch <= VERIFY_TOL;
    Ok(VerificationReport {
        id,
        id_matches,
        kind,
        constant: file.certificate.constant(),
        admissible: checks.admissible,
        exact_residual: checks.exact,
        batch_residual: checks.batch,
        batch,
        passed,
    })
}

struct Checks {
    admissible: bool,
    exact: Option<f64>,
    batch: f64,
}

pub(crate) fn domination_residual(
    t: &OperatorModel,
    c: &DominationCertificate,
    seed: u64,
    batch: usize,
) -> f64 {
    let k = check_domination(t, c, rng::derive(seed, "self-check", 0), batch);
    k.exact.unwrap_or(0.0).max(k.batch)
}

pub(crate) fn pietsch_residual(
    t: &OperatorModel,
    c: &PietschCertificate,
    seed: u64,
    batch: usize,
) -> f64 {
    let k = check_pietsch(t, c, rng::derive(seed, "self-check", 0), batch);
    k.exact.unwrap_or(0.0).max(k.batch)
}

fn in_ball(t: &OperatorModel, p: f64, z: &[f64], y: &[f64]) -> bool {
    let (Ok(xb), Ok(yb)) = (
        power_dual_ball(&t.domain, p),
        power_dual_ball(&t.codomain, p),
    ) else {
        return false;
    };
    z.len() == t.ncols()
        && y.len() == t.nrows()
        && z.iter().chain(y).all(|v| v.is_finite() && *v >= 0.0)
        && xb.contains(z, 1e-9)
        && yb.contains(y, 1e-9)
}

fn relative_gap(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.max(rhs);
    if scale <= 0.0 {
        0.0
    } else {
        ((lhs - rhs) / scale).max(0.0)
    }
}

/// Gaussian, sparse and sign vectors from an independent stream.
fn batch_vectors(n: usize, seed: u64, count: usize) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut g = rng::stream(seed, "verify-batch", 0);
    (0..count)
        .map(|k| match k % 3 {
            0 => rng::normal_vec(&mut g, n),
            1 => {
                let mut f = vec![0.0; n];
                let i = g.random_range(0..n);
                let j = g.random_range(0..n);
                f[i] = 1.0;
                f[j] += g.random_range(-1.0..1.0);
                f
            }
            _ => (0..n)
                .map(|_| if g.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect(),
        })
        .collect()
}

fn check_domination(
    t: &OperatorModel,
    c: &DominationCertificate,
    seed: u64,
    batch: usize,
) -> Checks {
    let n = t.ncols();
    let admissible = in_ball(t, c.p, &c.z_star, &c.y_star) && c.c >= 0.0;
    if !admissible {
        return Checks {
            admissible,
            exact: None,
            batch: f64::INFINITY,
        };
    }
    let w = functional_weights(t, &c.y_star);
    let mu = t.domain.masses();
    let cp = c.c.powf(c.p);
    let s: Vec<f64> = c.z_star.iter().zip(mu).map(|(z, m)| cp * z * m).collect();
    let exact = match c.method {
        Method::Eigen if c.p == 2.0 => {
            Some(linalg::relative_excess(&linalg::gram(&t.matrix, &w), &s).0)
        }
        Method::Vertex | Method::Majorant => {
            let tv = c.schur_t.clone().unwrap_or_else(|| vec![1.0; n]);
            if tv.len() != n || tv.iter().any(|x| !(*x > 0.0)) {
                return Checks {
                    admissible: false,
                    exact: None,
                    batch: f64::INFINITY,
                };
            }
            let d = majorant(&t.matrix.abs(), &w, &tv, c.p);
            Some(
                d.iter()
                    .zip(&s)
                    .map(|(di, si)| relative_gap(*di, *si))
                    .fold(0.0, f64::max),
            )
        }
        Method::Eigen => None,
    };
    let worst = batch_vectors(n, seed, batch)
        .iter()
        .map(|f| relative_gap(lhs(t, &w, c.p, f), weighted_power(&s, c.p, f)))
        .fold(0.0, f64::max);
    Checks {
        admissible,
        exact,
        batch: worst,
    }
}

fn check_pietsch(t: &OperatorModel, c: &PietschCertificate, seed: u64, batch: usize) -> Checks {
    let n = t.ncols();
    let eta = &c.eta;
    let dual = t.domain.kothe_dual();
    let yball = power_dual_ball(&t.codomain, c.p);
    let admissible = eta.support.len() == eta.weights.len()
        && !eta.weights.is_empty()
        && eta.weights.iter().all(|v| v.is_finite() && *v >= 0.0)
        && (eta.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12
        && eta
            .support
            .iter()
            .all(|x| x.len() == n && (dual.norm_unchecked(x) - 1.0).abs() <= 1e-9)
        && yball.is_ok_and(|b| {
            c.y_star.len() == t.nrows()
                && c.y_star.iter().all(|v| *v >= 0.0)
                && b.contains(&c.y_star, 1e-9)
        });
    if !admissible {
        return Checks {
            admissible,
            exact: None,
            batch: f64::INFINITY,
        };
    }
    let w = functional_weights(t, &c.y_star);
    let mu = t.domain.masses();
    let cp = c.c.powf(c.p);
    let us: Vec<Vec<f64>> = eta
        .support
        .iter()
        .map(|x| x.iter().zip(mu).map(|(a, b)| a * b).collect())
        .collect();
    let exact = match c.method {
        Method::Eigen if c.p == 2.0 => {
            let g = linalg::gram(&t.matrix, &w);
            let scale = linalg::max_eigen(&g).0;
            let mut m = -g;
            for (u, e) in us.iter().zip(&eta.weights) {
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += cp * e * u[i] * u[j];
                    }
                }
            }
            let lam = linalg::min_eigen(&m).0;
            Some(if scale > 0.0 {
                (-lam / scale).max(0.0)
            } else {
                (-lam).max(0.0)
            })
        }
        Method::Vertex | Method::Majorant => {
            // Coordinate support only: collect the mass sitting on each atom.
            let mut s = vec![0.0; n];
            for (u, e) in us.iter().zip(&eta.weights) {
                let nz: Vec<usize> = (0..n).filter(|&i| u[i] != 0.0).collect();
                if nz.len() != 1 {
                    return Checks {
                        admissible: false,
                        exact: None,
                        batch: f64::INFINITY,
                    };
                }
                s[nz[0]] += cp * e * u[nz[0]].abs().powf(c.p);
            }
            let tv = c.schur_t.clone().unwrap_or_else(|| vec![1.0; n]);
            if tv.len() != n || tv.iter().any(|x| !(*x > 0.0)) {
                return Checks {
                    admissible: false,
                    exact: None,
                    batch: f64::INFINITY,
                };
            }
            let d = majorant(&t.matrix.abs(), &w, &tv, c.p);
            Some(
                d.iter()
                    .zip(&s)
                    .map(|(di, si)| relative_gap(*di, *si))
                    .fold(0.0, f64::max),
            )
        }
        Method::Eigen => None,
    };
    let worst = batch_vectors(n, seed, batch)
        .iter()
        .map(|f| {
            let rhs: f64 = us
                .iter()
                .zip(&eta.weights)
                .map(|(u, e)| cp * e * linalg::dot(u, f).abs().powf(c.p))
                .sum();
            relative_gap(lhs(t, &w, c.p, f), rhs)
        })
        .fold(0.0, f64::max);
    Checks {
        admissible,
        exact,
        batch: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Exponent, SpaceDescriptor};
    use crate::synthesis::{synthesize_dominating_weight, SynthesisConfig};

    fn sample() -> CertificateFile {
        let t = OperatorModel::identity(SpaceDescriptor::lp(2, Exponent::Finite(2.0)));
        let cert =
            synthesize_dominating_weight(&t, 2.0, &[1.0, 0.5], 1.0, &SynthesisConfig::default())
                .unwrap()
                .feasible()
                .unwrap();
        CertificateFile::new(Certificate::Domination(cert), t)
    }

    #[test]
    fn json_round_trip_keeps_the_id() {
        let file = sample();
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"kind\":\"domination\""));
        let back: CertificateFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.content_id(), file.id.clone().unwrap());
        assert_eq!(file.id.unwrap().len(), 16);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::to_value(sample()).unwrap();
        v["certificate"]["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<CertificateFile>(v).is_err());
    }

    #[test]
    fn edited_constant_breaks_the_id() {
        let mut file = sample();
        if let Certificate::Domination(c) = &mut file.certificate {
            c.c = 5.0;
        }
        let r = verify(&file, 1, 100).unwrap();
        assert!(!r.id_matches && !r.passed);
    }
}
