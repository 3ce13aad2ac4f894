//! Small dense symmetric eigen helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn min_eigen(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    extreme_eigen(m, false)
}

/// Largest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn max_eigen(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    extreme_eigen(m, true)
}

fn extreme_eigen(m: &DMatrix<f64>, largest: bool) -> (f64, Vec<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut k = 0;
    for i in 1..eig.eigenvalues.len() {
        let better = if largest {
            eig.eigenvalues[i] > eig.eigenvalues[k]
        } else {
            eig.eigenvalues[i] < eig.eigenvalues[k]
        };
        if better {
            k = i;
        }
    }
    let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    (eig.eigenvalues[k], canonical_sign(v))
}

/// Flips a vector so that its first non-negligible entry is positive.
pub fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-14) {
        if *x < 0.0 {
            v.iter_mut().for_each(|y| *y = -*y);
        }
    }
    v
}

/// `T^T diag(w) T`.
pub fn gram(t: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    t.transpose() * d * t
}

/// `diag(s) M diag(s)`.
pub fn congruence(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| s[i] * m[(i, j)] * s[j])
}

/// Worst relative excess `max_f (f^T G f - f^T D f) / max(f^T G f, f^T D f)` of a
/// positive semidefinite `G` over `diag(d)`, with a direction attaining it.
pub fn relative_excess(g: &DMatrix<f64>, d: &[f64]) -> (f64, Vec<f64>) {
    let n = d.len();
    if let Some(i) = (0..n).find(|&i| d[i] <= 0.0 && g[(i, i)] > 0.0) {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        return (1.0, e);
    }
    let support: Vec<usize> = (0..n).filter(|&i| d[i] > 0.0).collect();
    if support.is_empty() {
        return (0.0, vec![0.0; n]);
    }
    let k = DMatrix::from_fn(support.len(), support.len(), |a, b| {
        let (i, j) = (support[a], support[b]);
        g[(i, j)] / (d[i] * d[j]).sqrt()
    });
    let (lam, h) = max_eigen(&k);
    let mut f = vec![0.0; n];
    for (a, &i) in support.iter().enumerate() {
        f[i] = h[a] / d[i].sqrt();
    }
    let excess = if lam > 1.0 { 1.0 - 1.0 / lam } else { 0.0 };
    (excess, canonical_sign(f))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_eigenpairs_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (lo, v) = min_eigen(&m);
        assert_eq!(lo, -1.0);
        assert!((v[1].abs() - 1.0).abs() < 1e-12);
        let (hi, _) = max_eigen(&m);
        assert_eq!(hi, 3.0);
    }
}
