//! Symmetric stable variables by the Chambers-Mallows-Stuck transform.

use std::f64::consts::FRAC_PI_2;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use crate::rng::Rng;

/// One draw of a standard symmetric `alpha`-stable variable, `0 < alpha <= 2`.
/// At `alpha = 2` this is a centered Gaussian of variance 2.
pub fn symmetric_stable(rng: &mut Rng, alpha: f64) -> f64 {
    let u: f64 = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return u.tan();
    }
    (alpha * u).sin() / u.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha)
}

pub fn symmetric_stable_vec(rng: &mut Rng, alpha: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| symmetric_stable(rng, alpha)).collect()
}
