//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `min c.x` subject to linear rows and `x >= 0`. Sizes here are a few
//! dozen variables and at most a few hundred rows.

const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Self {
        Self { coeffs, rel, rhs }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl LpOutcome {
    pub fn solution(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, objective } => Some((x, *objective)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub max_iterations: usize,
}

impl LinearProgram {
    pub fn minimize(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
            max_iterations: 50_000,
        }
    }

    pub fn push(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.constraints.push(Constraint::new(coeffs, rel, rhs));
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_total: usize,
    first_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let m = lp.constraints.len();
        let mut normalized: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let rel = match c.rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coeffs.iter().map(|x| -x).collect(), rel, -c.rhs)
                } else {
                    (c.coeffs.clone(), c.rel, c.rhs)
                }
            })
            .collect();
        let n_slack = normalized.iter().filter(|c| c.1 != Relation::Eq).count();
        let n_art = normalized.iter().filter(|c| c.1 != Relation::Le).count();
        let first_artificial = n + n_slack;
        let n_total = first_artificial + n_art;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut a) = (n, first_artificial);
        for (coeffs, rel, rhs) in normalized.drain(..) {
            let mut row = vec![0.0; n_total + 1];
            row[..n].copy_from_slice(&coeffs);
            row[n_total] = rhs;
            match rel {
                Relation::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = -1.0;
                    row[a] = 1.0;
                    basis.push(a);
                    s += 1;
                    a += 1;
                }
                Relation::Eq => {
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
            }
            rows.push(row);
        }
        Tableau {
            rows,
            basis,
            n_struct: n,
            n_total,
            first_artificial,
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let mut budget = lp.max_iterations;
        if self.first_artificial < self.n_total {
            let mut cost = vec![0.0; self.n_total];
            cost[self.first_artificial..]
                .iter_mut()
                .for_each(|c| *c = 1.0);
            match self.optimize(&cost, self.n_total, &mut budget) {
                Step::Done => {}
                Step::Unbounded => unreachable!("phase one is bounded below"),
                Step::Limit => return LpOutcome::IterationLimit,
            }
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.rows)
                .filter(|(b, _)| **b >= self.first_artificial)
                .map(|(_, r)| r[self.n_total])
                .sum();
            let scale = 1.0
                + lp.constraints
                    .iter()
                    .map(|c| c.rhs.abs())
                    .fold(0.0, f64::max);
            if infeas > FEAS_TOL * scale {
                return LpOutcome::Infeasible;
            }
            self.expel_artificials();
        }
        let mut cost = vec![0.0; self.n_total];
        cost[..self.n_struct].copy_from_slice(&lp.objective);
        match self.optimize(&cost, self.first_artificial, &mut budget) {
            Step::Done => {}
            Step::Unbounded => return LpOutcome::Unbounded,
            Step::Limit => return LpOutcome::IterationLimit,
        }
        let mut x = vec![0.0; self.n_struct];
        for (r, b) in self.rows.iter().zip(&self.basis) {
            if *b < self.n_struct {
                x[*b] = r[self.n_total].max(0.0);
            }
        }
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, objective }
    }

    /// Minimizes `cost` using only columns below `allowed` as entering candidates.
    fn optimize(&mut self, cost: &[f64], allowed: usize, budget: &mut usize) -> Step {
        loop {
            if *budget == 0 {
                return Step::Limit;
            }
            *budget -= 1;
            let duals: Vec<f64> = self.basis.iter().map(|b| cost[*b]).collect();
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .rows
                        .iter()
                        .zip(&duals)
                        .map(|(r, d)| r[j] * d)
                        .sum::<f64>();
                reduced < -FEAS_TOL
            });
            let Some(j) = entering else { return Step::Done };
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.rows.iter().enumerate() {
                if r[j] > PIVOT_TOL {
                    let ratio = r[self.n_total] / r[j];
                    let better = match leave {
                        None => true,
                        Some((k, best)) => {
                            ratio < best - PIVOT_TOL
                                || (ratio <= best + PIVOT_TOL && self.basis[i] < self.basis[k])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((i, _)) = leave else {
                return Step::Unbounded;
            };
            self.pivot(i, j);
        }
    }

    fn pivot(&mut self, i: usize, j: usize) {
        let piv = self.rows[i][j];
        self.rows[i].iter_mut().for_each(|x| *x /= piv);
        let pivot_row = self.rows[i].clone();
        for (k, row) in self.rows.iter_mut().enumerate() {
            if k != i {
                let f = row[j];
                if f != 0.0 {
                    row.iter_mut()
                        .zip(&pivot_row)
                        .for_each(|(x, p)| *x -= f * p);
                }
            }
        }
        self.basis[i] = j;
    }

    /// Pivots zero-level artificials out of the basis; drops redundant rows.
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| self.rows[i][j].abs() > 1e-9);
                match col {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        self.rows.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
}

enum Step {
    Done,
    Unbounded,
    Limit,
}
