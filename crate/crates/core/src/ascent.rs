//! Seeded multistart hill climbing for homogeneous ratio objectives.
//!
//! Restarts are independent and run on the rayon pool; their results are
//! merged in restart order, so the outcome only depends on the seed.

use rand::Rng as _;
use rayon::prelude::*;

use crate::rng;

#[derive(Clone, Copy, Debug)]
pub struct AscentConfig {
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            restarts: 16,
            iterations: 400,
        }
    }
}

/// Maximizes `objective` over `R^dim`. Explicit `starts` are climbed first,
/// then `cfg.restarts` random starts. Returns the best value and its point;
/// ties go to the lexicographically smallest point.
pub fn maximize<F>(
    dim: usize,
    starts: &[Vec<f64>],
    cfg: AscentConfig,
    seed: u64,
    label: &str,
    objective: F,
) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let total = starts.len() + cfg.restarts;
    let results: Vec<(f64, Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, label, r as u64);
            let x0 = if r < starts.len() {
                starts[r].clone()
            } else {
                rng::normal_vec(&mut g, dim)
            };
            climb(x0, cfg.iterations, &mut g, &objective)
        })
        .collect();
    let mut best: (f64, Vec<f64>) = (f64::NEG_INFINITY, vec![0.0; dim]);
    for (v, x) in results {
        if v > best.0 || (v == best.0 && lexicographic_less(&x, &best.1)) {
            best = (v, x);
        }
    }
    best
}

fn lexicographic_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn eval<F: Fn(&[f64]) -> f64>(objective: &F, x: &[f64]) -> f64 {
    let v = objective(x);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn climb<F: Fn(&[f64]) -> f64>(
    mut x: Vec<f64>,
    iterations: usize,
    g: &mut rng::Rng,
    objective: &F,
) -> (f64, Vec<f64>) {
    let dim = x.len();
    let mut fx = eval(objective, &x);
    let mut sigma = 0.5;
    for _ in 0..iterations {
        let scale = (x.iter().map(|v| v * v).sum::<f64>() / dim.max(1) as f64)
            .sqrt()
            .max(1e-300);
        let mut y = x.clone();
        if g.random_bool(0.5) {
            let i = g.random_range(0..dim);
            let xi: f64 = rng::normal_vec(g, 1)[0];
            y[i] += sigma * scale * xi;
        } else {
            for (yi, xi) in y.iter_mut().zip(rng::normal_vec(g, dim)) {
                *yi += sigma * scale * xi;
            }
        }
        let fy = eval(objective, &y);
        if fy > fx {
            x = y;
            fx = fy;
            sigma = (sigma * 1.3).min(2.0);
        } else {
            sigma = (sigma * 0.93).max(1e-9);
        }
    }
    (fx, x)
}
