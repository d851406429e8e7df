//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the crate's kernels or solvers.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_points(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Matérn-5/2 ARD written out term by term.
pub fn matern(a: &[f64], b: &[f64], ls: &[f64], var: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    let r = r2.sqrt();
    let s5r = 5f64.sqrt() * r;
    var * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
}

/// Posterior mean and variance by forming the joint Gram matrix and
/// solving with LU.
pub fn dense_predict(
    xs: &[Vec<f64>],
    ys: &[f64],
    cov: &dyn Fn(&[f64], &[f64]) -> f64,
    noise: &[f64],
    prior_mean: f64,
    x: &[f64],
) -> (f64, f64) {
    let m = xs.len();
    let k = DMatrix::from_fn(m, m, |i, j| cov(&xs[i], &xs[j]) + if i == j { noise[i] } else { 0.0 });
    let kx = DVector::from_fn(m, |i, _| cov(&xs[i], x));
    let lu = k.lu();
    let resid = DVector::from_fn(m, |i, _| ys[i] - prior_mean);
    let w = lu.solve(&resid).expect("oracle gram matrix is singular");
    let v = lu.solve(&kx).expect("oracle gram matrix is singular");
    (prior_mean + kx.dot(&w), cov(x, x) - kx.dot(&v))
}

/// Gaussian log density of `ys` under `N(prior_mean, K + diag(noise))`.
pub fn dense_log_likelihood(
    xs: &[Vec<f64>],
    ys: &[f64],
    cov: &dyn Fn(&[f64], &[f64]) -> f64,
    noise: f64,
) -> f64 {
    let m = xs.len();
    let k = DMatrix::from_fn(m, m, |i, j| cov(&xs[i], &xs[j]) + if i == j { noise } else { 0.0 });
    let y = DVector::from_column_slice(ys);
    let lu = k.clone().lu();
    let w = lu.solve(&y).expect("singular");
    -0.5 * y.dot(&w) - 0.5 * lu.determinant().ln() - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
