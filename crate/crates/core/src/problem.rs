//! Problem files and command dispatch for the command-line tool.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::operator::OperatorModel;
use crate::programs::endomorphism_weight;
use crate::regularity::{lambda_bracket, rho_bracket, rho_upper, BracketConfig};
use crate::synthesis::{
    power_dual_ball, synthesize_dominating_weight, verify, Certificate, CertificateFile, Synthesis,
    SynthesisConfig,
};
use crate::vector_measure::{
    conjugate_family_implies_regularity, conjugate_family_synthesize, counterexample_table,
    kernel_vector_measure, ConjugateOutcome, EquivalenceConstants, KernelGrid, WeightFamily,
};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Rho,
    Lambda,
    Dominate,
    Endo,
    Conjugate,
    Kernel,
    Counterexample,
    Verify,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Rho,
        Command::Lambda,
        Command::Dominate,
        Command::Endo,
        Command::Conjugate,
        Command::Kernel,
        Command::Counterexample,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Rho => "rho",
            Command::Lambda => "lambda",
            Command::Dominate => "dominate",
            Command::Endo => "endo",
            Command::Conjugate => "conjugate",
            Command::Kernel => "kernel",
            Command::Counterexample => "counterexample",
            Command::Verify => "verify",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub budget: Option<usize>,
    pub family_size: Option<usize>,
    pub pool_size: Option<usize>,
    pub batch: Option<usize>,
    pub max_cuts: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSpec {
    pub ns: Vec<usize>,
    pub q: f64,
    #[serde(default)]
    pub k1: Option<f64>,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default)]
    pub c1: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: String,
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub operator: Option<OperatorModel>,
    #[serde(default)]
    pub kernel: Option<KernelGrid>,
    #[serde(default)]
    pub family: Option<WeightFamily>,
    /// Target constant for `dominate`, `endo` and `conjugate`.
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub y_star: Option<Vec<f64>>,
    /// Truncation of the endomorphism series.
    #[serde(default)]
    pub terms: Option<usize>,
    #[serde(default)]
    pub counterexample: Option<CounterexampleSpec>,
    #[serde(default)]
    pub certificate: Option<CertificateFile>,
    #[serde(default)]
    pub params: Params,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let problem: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if problem.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported version `{}`",
                problem.version
            )));
        }
        Ok(problem)
    }
}

/// Flag values that take precedence over the file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub budget: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Unknown,
    Infeasible,
    VerificationFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Unknown => 2,
            Status::Infeasible => 3,
            Status::VerificationFailed => 4,
        }
    }
}

/// Exit code for input, schema and precondition errors.
pub const INPUT_ERROR: i32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: Command,
    pub status: Status,
    pub seed: u64,
    /// Named constants, keyed by role.
    pub constants: BTreeMap<String, Option<f64>>,
    pub details: Value,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

struct Settings {
    seed: u64,
    tol: f64,
    budget: usize,
    family_size: usize,
    pool_size: usize,
    batch: usize,
    synthesis: SynthesisConfig,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn need<T>(v: Option<T>, what: &str, command: Command) -> Result<T> {
    v.ok_or_else(|| Error::Schema(format!("`{command}` requires `{what}`")))
}

/// Runs one command. Errors map to exit code 1; everything else is a report.
pub fn run(problem: &ProblemFile, overrides: Overrides) -> Result<Report> {
    let command = need(
        overrides.command.or(problem.command),
        "command",
        Command::Rho,
    )
    .map_err(|_| Error::Schema("no command given in the file or on the command line".into()))?;
    let params = &problem.params;
    let seed = overrides.seed.or(params.seed).unwrap_or(0);
    let defaults = SynthesisConfig::default();
    let s = Settings {
        seed,
        tol: overrides.tol.or(params.tol).unwrap_or(1e-6),
        budget: overrides.budget.or(params.budget).unwrap_or(8),
        family_size: params.family_size.unwrap_or(3),
        pool_size: params.pool_size.unwrap_or(16),
        batch: params.batch.unwrap_or(2000),
        synthesis: SynthesisConfig {
            seed,
            max_cuts: params.max_cuts.unwrap_or(defaults.max_cuts),
            ..defaults
        },
    };
    let mut constants = BTreeMap::new();
    let (status, details) = match command {
        Command::Rho | Command::Lambda => regularity(problem, command, &s, &mut constants)?,
        Command::Dominate => dominate(problem, &s, &mut constants)?,
        Command::Endo => endo(problem, &s, &mut constants)?,
        Command::Conjugate => {
            let t = need(problem.operator.clone(), "operator", command)?;
            let family = need(problem.family.as_ref(), "family", command)?;
            conjugate(
                &t,
                family,
                need(problem.p, "p", command)?,
                problem.constant,
                &s,
                &mut constants,
            )?
        }
        Command::Kernel => {
            let grid = need(problem.kernel.as_ref(), "kernel", command)?;
            let family = need(problem.family.as_ref(), "family", command)?;
            let p = need(problem.p, "p", command)?;
            let (t, m) = kernel_vector_measure(grid, family, p)?;
            let (status, mut details) =
                conjugate(&t, family, p, problem.constant, &s, &mut constants)?;
            details["control_density"] = to_value(&m.control_density);
            (status, details)
        }
        Command::Counterexample => counterexample(problem, &s, &mut constants)?,
        Command::Verify => verify_certificate(problem, &s, &mut constants)?,
    };
    Ok(Report {
        command,
        status,
        seed,
        constants,
        details,
    })
}

fn regularity(
    problem: &ProblemFile,
    command: Command,
    s: &Settings,
    constants: &mut BTreeMap<String, Option<f64>>,
) -> Result<(Status, Value)> {
    let t = need(problem.operator.as_ref(), "operator", command)?;
    let p = need(problem.p, "p", command)?;
    let cfg = BracketConfig {
        family_size: s.family_size,
        budget: s.budget,
        pool_size: s.pool_size,
        tol: s.tol,
        seed: s.seed,
    };
    let (bracket, certificate, label) = if command == Command::Rho {
        let b = rho_bracket(t, p, &cfg)?;
        (b.bracket, b.certificate, "p-regular norm")
    } else {
        let b = lambda_bracket(t, p, &cfg)?;
        (b.bracket, b.certificate, "lattice p-summing norm")
    };
    constants.insert("lower".into(), Some(bracket.lower));
    constants.insert("upper".into(), bracket.upper);
    let status = if bracket.upper.is_some() {
        Status::Ok
    } else {
        Status::Unknown
    };
    Ok((
        status,
        json!({ "quantity": label, "p": p, "bracket": bracket, "certificate": certificate }),
    ))
}

fn dominate(
    problem: &ProblemFile,
    s: &Settings,
    constants: &mut BTreeMap<String, Option<f64>>,
) -> Result<(Status, Value)> {
    let command = Command::Dominate;
    let t = need(problem.operator.as_ref(), "operator", command)?;
    let p = need(problem.p, "p", command)?;
    let c = need(problem.constant, "constant", command)?;
    let y = match &problem.y_star {
        Some(y) => y.clone(),
        None => power_dual_ball(&t.codomain, p)?.coordinate_bounds(),
    };
    constants.insert("constant".into(), Some(c));
    Ok(
        match synthesize_dominating_weight(t, p, &y, c, &s.synthesis)? {
            Synthesis::Feasible(cert) => {
                let file = CertificateFile::new(Certificate::Domination(cert), t.clone());
                (
                    Status::Ok,
                    json!({ "outcome": "feasible", "certificate": file }),
                )
            }
            Synthesis::Infeasible { witnesses } => (
                Status::Infeasible,
                json!({ "outcome": "infeasible", "witnesses": witnesses }),
            ),
            Synthesis::Unknown { reason } => (
                Status::Unknown,
                json!({ "outcome": "unknown", "reason": reason }),
            ),
        },
    )
}

fn endo(
    problem: &ProblemFile,
    s: &Settings,
    constants: &mut BTreeMap<String, Option<f64>>,
) -> Result<(Status, Value)> {
    let command = Command::Endo;
    let t = need(problem.operator.as_ref(), "operator", command)?;
    let p = need(problem.p, "p", command)?;
    let c = match problem.constant {
        Some(c) => c,
        None => match rho_upper(t, p, s.tol, &s.synthesis)?.value {
            Some(c) => c * (1.0 + s.tol),
            None => {
                return Ok((
                    Status::Unknown,
                    json!({ "reason": "no certified p-regular bound" }),
                ))
            }
        },
    };
    let r = match endomorphism_weight(t, p, c, problem.terms.unwrap_or(40), &s.synthesis) {
        Ok(r) => r,
        Err(Error::Synthesis {
            step,
            infeasible,
            reason,
        }) => {
            let status = if infeasible {
                Status::Infeasible
            } else {
                Status::Unknown
            };
            return Ok((status, json!({ "failed_step": step, "reason": reason })));
        }
        Err(e) => return Err(e),
    };
    constants.insert("step_constant".into(), Some(r.step_constant));
    constants.insert("certified_constant".into(), Some(r.certified_constant));
    constants.insert("weighted_norm".into(), Some(r.weighted_norm));
    constants.insert("series_bound".into(), Some(2f64.powf(1.0 / p) * c));
    Ok((Status::Ok, to_value(&r)))
}

fn conjugate(
    t: &OperatorModel,
    family: &WeightFamily,
    p: f64,
    constant: Option<f64>,
    s: &Settings,
    constants: &mut BTreeMap<String, Option<f64>>,
) -> Result<(Status, Value)> {
    let outcome = conjugate_family_synthesize(t, family, p, constant, s.tol, &s.synthesis)?;
    let report = match &outcome {
        ConjugateOutcome::Conjugate(r) => r,
        ConjugateOutcome::NotConjugatable { .. } => {
            return Ok((Status::Infeasible, to_value(&outcome)))
        }
    };
    let replay =
        conjugate_family_implies_regularity(t, family, report, p, s.batch.min(500), s.seed)?;
    constants.insert("uniform_constant".into(), Some(report.uniform_constant));
    constants.insert("inclusion_bound".into(), Some(report.inclusion_bound));
    constants.insert("replay_ratio".into(), Some(replay.ratio));
    let status = if report.passed && replay.passed {
        Status::Ok
    } else {
        Status::VerificationFailed
    };
    Ok((status, json!({ "conjugate": outcome, "replay": replay })))
}

fn counterexample(
    problem: &ProblemFile,
    s: &Settings,
    constants: &mut BTreeMap<String, Option<f64>>,
) -> Result<(Status, Value)> {
    let spec = need(
        problem.counterexample.as_ref(),
        "counterexample",
        Command::Counterexample,
    )?;
    let p = need(problem.p, "p", Command::Counterexample)?;
    let consts = EquivalenceConstants {
        k1: spec.k1,
        c2: spec.c2,
        c1: spec.c1,
    };
    let table = counterexample_table(&spec.ns, p, spec.q, consts, s.seed)?;
    constants.insert("slope".into(), Some(table.slope));
    constants.insert("expected_slope".into(), Some(table.expected_slope));
    Ok((Status::Ok, to_value(&table)))
}

fn verify_certificate(
    problem: &ProblemFile,
    s: &Settings,
    constants: &mut BTreeMap<String, Option<f64>>,
) -> Result<(Status, Value)> {
    let file = need(problem.certificate.as_ref(), "certificate", Command::Verify)?;
    let r = verify(file, s.seed, s.batch)?;
    constants.insert("constant".into(), Some(r.constant));
    constants.insert("batch_residual".into(), Some(r.batch_residual));
    constants.insert("exact_residual".into(), r.exact_residual);
    let status = if r.passed {
        Status::Ok
    } else {
        Status::VerificationFailed
    };
    Ok((status, to_value(&r)))
}
