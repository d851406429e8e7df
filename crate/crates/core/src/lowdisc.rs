//! Randomly shifted Kronecker (R_d) low-discrepancy sequences.
//!
//! Point `n` in dimension `d` is `frac(shift_d + (n + 1) * alpha_d)` where the
//! `alpha_d` are successive powers of the inverse of the generalized golden
//! ratio. The per-dimension shift is drawn from a seeded ChaCha stream, which
//! scrambles the sequence while keeping its discrepancy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct QuasiRandom {
    alpha: Vec<f64>,
    shift: Vec<f64>,
}

impl QuasiRandom {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_10d1_5c0f_u64);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self {
            alpha: kronecker_alpha(dim),
            shift,
        }
    }

    /// Unshifted sequence, mostly useful in tests.
    pub fn unshifted(dim: usize) -> Self {
        Self {
            alpha: kronecker_alpha(dim),
            shift: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn point(&self, n: usize) -> Vec<f64> {
        let k = (n + 1) as f64;
        self.alpha
            .iter()
            .zip(&self.shift)
            .map(|(a, s)| (s + k * a).fract())
            .collect()
    }

    /// First `n` points as rows.
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| self.point(i)).collect()
    }
}

fn kronecker_alpha(dim: usize) -> Vec<f64> {
    // phi_d is the unique positive root of x^(d+1) = x + 1.
    let mut phi = 2.0_f64;
    let p = (dim + 1) as f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / p);
    }
    (1..=dim).map(|j| phi.powi(-(j as i32)).fract()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_ratio_in_one_dimension() {
        let q = QuasiRandom::unshifted(1);
        let inv_phi = 2.0 / (1.0 + 5f64.sqrt());
        assert!((q.alpha[0] - inv_phi).abs() < 1e-12);
    }

    #[test]
    fn points_fill_the_cube_evenly() {
        let q = QuasiRandom::new(6, 42);
        let pts = q.points(4096);
        for d in 0..6 {
            let mut bins = [0usize; 8];
            for p in &pts {
                assert!((0.0..1.0).contains(&p[d]));
                bins[(p[d] * 8.0) as usize] += 1;
            }
            for b in bins {
                assert!((b as i64 - 512).abs() < 20, "dimension {d} bins {bins:?}");
            }
        }
    }

    #[test]
    fn seeds_change_the_shift() {
        assert_ne!(
            QuasiRandom::new(3, 1).point(0),
            QuasiRandom::new(3, 2).point(0)
        );
        assert_eq!(
            QuasiRandom::new(3, 7).points(5),
            QuasiRandom::new(3, 7).points(5)
        );
    }
}
