mod common;

use std::time::Instant;

use common::{dense_log_likelihood, dense_predict, matern, rel_err, rng, uniform_points};
use mfbo::gp::{
    fit_hyperparameters, fit_posterior, log_marginal_likelihood, map_objective, matern52_ard, Dataset, Fidelity,
    HyperPriorConfig, KernelHyperparams, Matern52, Posterior,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_hp(rng: &mut impl Rng, d: usize) -> KernelHyperparams {
    KernelHyperparams::new(
        (0..d).map(|_| rng.random_range(0.15..1.5)).collect(),
        rng.random_range(0.3..3.0),
        rng.random_range(1e-3..5e-2),
    )
}

fn dataset(xs: &[Vec<f64>], ys: &[f64]) -> Dataset {
    Dataset::from_rows(xs[0].len(), Fidelity::High, xs.to_vec(), ys.to_vec()).unwrap()
}

#[test]
fn matern_at_unit_distance_matches_high_precision_value() {
    // (1 + sqrt5 + 5/3) exp(-sqrt5), evaluated with 40 significant digits.
    let expected = 0.523_994_108_831_820_3;
    let hp = KernelHyperparams::new(vec![1.0, 1.0], 1.0, 1e-6);
    let k = matern52_ard(&[0.0, 0.0], &[1.0, 0.0], &hp).unwrap();
    assert!((k - expected).abs() < 1e-15, "{k}");
}

#[test]
fn matern_limits() {
    let hp = KernelHyperparams::new(vec![0.3, 0.7], 2.0, 1e-6);
    assert_eq!(matern52_ard(&[0.4, 0.1], &[0.4, 0.1], &hp).unwrap(), 2.0);
    let far = matern52_ard(&[0.0, 0.0], &[100.0, 100.0], &hp).unwrap();
    assert!(far < 1e-200);
}

#[test]
fn posterior_matches_dense_oracle_on_random_datasets() {
    let start = Instant::now();
    let mut r = rng(71);
    let mut worst = 0.0f64;
    for case in 0..25 {
        let d = 1 + case % 6;
        let m = r.random_range(2..=20);
        let xs = uniform_points(&mut r, m, d);
        let ys: Vec<f64> = (0..m).map(|_| r.random_range(-2.0..2.0)).collect();
        let hp = random_hp(&mut r, d);
        let prior_mean = r.random_range(-0.5..0.5);
        let post = fit_posterior(&dataset(&xs, &ys), &hp, prior_mean).unwrap();
        let cov = |a: &[f64], b: &[f64]| matern(a, b, &hp.lengthscales, hp.signal_variance);
        let noise = vec![hp.noise_variance; m];
        for x in uniform_points(&mut r, 3, d) {
            let (mu, var) = post.predict(&x);
            let (mu_o, var_o) = dense_predict(&xs, &ys, &cov, &noise, prior_mean, &x);
            worst = worst.max(rel_err(mu, mu_o)).max(rel_err(var, var_o));
        }
    }
    assert!(worst < 1e-8, "worst relative error {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 5.0, "took {:?}", start.elapsed());
}

#[test]
fn two_dimensional_five_point_instance_matches_oracle() {
    let mut r = rng(5);
    let xs = uniform_points(&mut r, 5, 2);
    let ys = [0.3, -1.2, 0.8, 0.1, 2.0];
    let hp = KernelHyperparams::new(vec![0.4, 0.25], 1.3, 1e-3);
    let post = fit_posterior(&dataset(&xs, &ys), &hp, 0.0).unwrap();
    let cov = |a: &[f64], b: &[f64]| matern(a, b, &hp.lengthscales, hp.signal_variance);
    for x in [[0.1, 0.9], [0.5, 0.5], [0.95, 0.05]] {
        let (mu, var) = post.predict(&x);
        let (mu_o, var_o) = dense_predict(&xs, &ys, &cov, &[1e-3; 5], 0.0, &x);
        assert!(rel_err(mu, mu_o) < 1e-8 && rel_err(var, var_o) < 1e-8, "{x:?}");
    }
}

#[test]
fn interpolates_a_single_noise_free_point() {
    let hp = KernelHyperparams::new(vec![0.3], 1.0, 1e-12);
    let post = fit_posterior(&dataset(&[vec![0.4]], &[1.7]), &hp, 0.0).unwrap();
    let (mu, var) = post.predict(&[0.4]);
    assert!((mu - 1.7).abs() < 1e-9);
    assert!(var < 1e-9);
}

#[test]
fn empty_conditioning_returns_the_prior() {
    let post = Posterior::fit(Matern52::new(vec![0.2, 0.2], 1.8), vec![], &[], vec![], 0.25).unwrap();
    assert_eq!(post.predict(&[0.3, 0.6]), (0.25, 1.8));
}

#[test]
fn noisy_training_point_shrinks_toward_its_target() {
    let hp = KernelHyperparams::new(vec![0.3], 1.0, 0.1);
    let post = fit_posterior(&dataset(&[vec![0.5], vec![0.9]], &[2.0, -1.0]), &hp, 0.5).unwrap();
    let (mu, var_train) = post.predict(&[0.5]);
    assert!((mu - 2.0).abs() < (0.5f64 - 2.0).abs());
    let (_, var_far) = post.predict(&[0.0]);
    assert!(var_train <= var_far);
}

#[test]
fn scalar_likelihood_at_the_mean() {
    let hp = KernelHyperparams::new(vec![0.5], 1.5, 0.25);
    let (lml, _) = log_marginal_likelihood(&dataset(&[vec![0.2]], &[0.0]), &hp, 0.0).unwrap();
    let expected = -0.5 * (1.75f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((lml - expected).abs() < 1e-14);
}

#[test]
fn likelihood_matches_dense_log_density() {
    let mut r = rng(12);
    let xs = uniform_points(&mut r, 8, 3);
    let ys: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let hp = random_hp(&mut r, 3);
    let (lml, _) = log_marginal_likelihood(&dataset(&xs, &ys), &hp, 0.0).unwrap();
    let cov = |a: &[f64], b: &[f64]| matern(a, b, &hp.lengthscales, hp.signal_variance);
    let oracle = dense_log_likelihood(&xs, &ys, &cov, hp.noise_variance);
    assert!(rel_err(lml, oracle) < 1e-10, "{lml} vs {oracle}");
}

#[test]
fn likelihood_gradient_matches_central_differences() {
    let h = 1e-5;
    let mut r = rng(404);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let d = r.random_range(1..=3);
        let xs = uniform_points(&mut r, 4, d);
        let ys: Vec<f64> = (0..4).map(|_| r.random_range(-1.5..1.5)).collect();
        let data = dataset(&xs, &ys);
        let hp = random_hp(&mut r, d);
        let theta = hp.to_log_vec();
        let (_, grad) = log_marginal_likelihood(&data, &hp, 0.0).unwrap();
        for i in 0..theta.len() {
            let at = |delta: f64| {
                let mut t = theta.clone();
                t[i] += delta;
                log_marginal_likelihood(&data, &KernelHyperparams::from_log_vec(&t), 0.0).unwrap().0
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let err = (grad[i] - fd).abs() / fd.abs().max(grad[i].abs());
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-5, "worst relative gradient error {worst:e}");
}

#[test]
fn likelihood_is_invariant_to_row_order() {
    let mut r = rng(3);
    let xs = uniform_points(&mut r, 6, 2);
    let ys: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
    let hp = random_hp(&mut r, 2);
    let (a, _) = log_marginal_likelihood(&dataset(&xs, &ys), &hp, 0.0).unwrap();
    let order = [4, 1, 5, 0, 3, 2];
    let xs2: Vec<_> = order.iter().map(|&i| xs[i].clone()).collect();
    let ys2: Vec<_> = order.iter().map(|&i| ys[i]).collect();
    let (b, _) = log_marginal_likelihood(&dataset(&xs2, &ys2), &hp, 0.0).unwrap();
    assert!((a - b).abs() < 1e-10);
}

/// Standardized draw from a zero-mean GP with lengthscale 0.3 at 40 inputs.
fn gp_draw(seed: u64) -> Dataset {
    let mut r = rng(seed);
    let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![r.random::<f64>()]).collect();
    let k = DMatrix::from_fn(40, 40, |i, j| matern(&xs[i], &xs[j], &[0.3], 1.0) + if i == j { 1e-6 } else { 0.0 });
    let l = k.cholesky().unwrap().unpack();
    let z = DVector::from_fn(40, |_, _| r.sample::<f64, _>(StandardNormal));
    let f = l * z;
    let s = mfbo::gp::Standardization::fit(f.as_slice());
    dataset(&xs, &s.apply_all(f.as_slice()))
}

#[test]
fn recovers_a_known_lengthscale() {
    let priors = HyperPriorConfig::default();
    let hits = (0..5)
        .filter(|&seed| {
            let fit = fit_hyperparameters(&gp_draw(100 + seed), &priors, 20, seed).unwrap();
            let l = fit.hyperparams.lengthscales[0];
            (0.15..=0.6).contains(&l)
        })
        .count();
    assert!(hits >= 4, "{hits} of 5");
}

#[test]
fn fitted_objective_beats_every_restart_start() {
    let data = gp_draw(7);
    let priors = HyperPriorConfig::default();
    let fit = fit_hyperparameters(&data, &priors, 8, 1).unwrap();
    let (value, _) = map_objective(&data, &fit.hyperparams, &priors, 0.0).unwrap();
    assert!((value - fit.objective).abs() < 1e-9);
    assert!(!fit.restarts.is_empty());
    for rec in &fit.restarts {
        if rec.initial_objective.is_finite() {
            assert!(fit.objective >= rec.initial_objective);
        }
    }
}

#[test]
fn noise_box_bounds_the_fitted_noise() {
    let priors = HyperPriorConfig {
        noise_box: Some([1e-5, 2e-4]),
        ..Default::default()
    };
    for seed in 0..3 {
        let fit = fit_hyperparameters(&gp_draw(seed), &priors, 5, seed).unwrap();
        let s2 = fit.hyperparams.noise_variance;
        assert!((1e-5..=2e-4).contains(&s2), "{s2}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_symmetric_and_bounded(
        a in prop::collection::vec(0.0..1.0f64, 3),
        b in prop::collection::vec(0.0..1.0f64, 3),
        ls in prop::collection::vec(0.05..2.0f64, 3),
        var in 0.1..5.0f64,
    ) {
        let hp = KernelHyperparams::new(ls, var, 1e-6);
        let ab = matern52_ard(&a, &b, &hp).unwrap();
        let ba = matern52_ard(&b, &a, &hp).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab > 0.0 && ab <= var);
    }

    #[test]
    fn posterior_variance_is_non_negative_and_below_prior(
        seed in 0u64..1000,
        x in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let mut r = rng(seed);
        let xs = uniform_points(&mut r, 6, 2);
        let ys: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let hp = random_hp(&mut r, 2);
        let post = fit_posterior(&dataset(&xs, &ys), &hp, 0.0).unwrap();
        let (_, var) = post.predict(&x);
        prop_assert!(var >= 0.0);
        prop_assert!(var <= hp.signal_variance * (1.0 + 1e-12));
    }
}
