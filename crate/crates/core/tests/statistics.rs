//! Monte Carlo and quadrature oracles for the speckle law and histograms.

mod support;

use support::{integrate, rng};
use sardespeckle::losses::{empirical_histogram, kl_loss, theoretical_histogram, LossWeights};
use sardespeckle::speckle_sim::{apply_multiplicative, draw_speckle, gamma_pdf, sample_speckle, SpeckleConfig};
use sardespeckle::ImageGray;

fn moments(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn single_look_moments_and_cdf() {
    let field = sample_speckle(1000, 1000, &SpeckleConfig::single_look(20240601)).unwrap();
    let samples = field.data();
    assert_eq!(samples.len(), 1_000_000);
    let (mean, var) = moments(samples);
    let below = samples.iter().filter(|&&s| s <= 1.0).count() as f64 / samples.len() as f64;
    let cdf_at_one = 1.0 - (-1.0f64).exp();
    println!("mean {mean:.5} var {var:.5} F(1) {below:.5}");
    assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
    assert!((below - cdf_at_one).abs() < 0.002, "cdf {below}");
    assert!(samples.iter().all(|&s| s > 0.0));
}

#[test]
fn four_look_variance() {
    let cfg = SpeckleConfig::new(4.0, 77).unwrap();
    let field = sample_speckle(1000, 1000, &cfg).unwrap();
    let (mean, var) = moments(field.data());
    assert!((mean - 1.0).abs() < 0.0025, "mean {mean}");
    assert!((0.2475..=0.2525).contains(&var), "variance {var}");
}

#[test]
fn fractional_looks_moments() {
    let mut r = rng(5);
    let samples: Vec<f64> = (0..400_000).map(|_| draw_speckle(&mut r, 0.5)).collect();
    let (mean, var) = moments(&samples);
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    assert!((var - 2.0).abs() < 0.05, "variance {var}");
}

#[test]
fn gamma_pdf_integrates_to_one() {
    for looks in [1.0, 2.0, 4.0] {
        let f = |n: f64| gamma_pdf(n, looks).unwrap();
        let total = integrate(&f, 0.0, 50.0);
        println!("L={looks}: {total:.10}");
        assert!((total - 1.0).abs() < 1e-6, "L={looks}: {total}");
    }
}

#[test]
fn theoretical_masses_match_midpoint_quadrature() {
    let w = LossWeights::default();
    for looks in [1.0, 2.0, 3.5] {
        let q = theoretical_histogram(looks, &w).unwrap();
        let width = q.bin_width();
        let sub = 512;
        let h = width / sub as f64;
        let mut interior = Vec::new();
        for i in 1..q.bins() - 1 {
            let left = q.lo + i as f64 * width;
            let mass: f64 = (0..sub).map(|j| gamma_pdf(left + (j as f64 + 0.5) * h, looks).unwrap() * h).sum();
            interior.push(mass);
            assert!(
                (q.masses[i] - mass).abs() < 1e-6 + 1e-4 * mass,
                "L={looks} bin {i}: {} vs {mass}",
                q.masses[i]
            );
        }
        assert!((q.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // The boundary bins hold whatever the interior does not.
        let tails = 1.0 - interior.iter().sum::<f64>();
        assert!((q.masses[0] + q.masses[q.bins() - 1] - tails).abs() < 1e-5);
    }
}

#[test]
fn eight_bin_first_mass_is_exponential_cdf() {
    let w = LossWeights {
        kl_bins: 8,
        kl_range: [0.0, 8.0],
        ..LossWeights::default()
    };
    let q = theoretical_histogram(1.0, &w).unwrap();
    assert!((q.masses[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-6);
}

#[test]
fn monte_carlo_histogram_converges_to_theory() {
    let w = LossWeights::default();
    let field = sample_speckle(250, 400, &SpeckleConfig::single_look(31)).unwrap();
    let (p, _) = empirical_histogram(&field, &w).unwrap();
    let q = theoretical_histogram(1.0, &w).unwrap();
    let worst = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("worst bin deviation {worst:.5}");
    assert!(worst < 0.01, "worst bin deviation {worst}");
}

#[test]
fn kl_of_exact_draws_is_small_and_shrinks_with_sample_count() {
    let w = LossWeights::default();
    let value_for = |size: usize, seed: u64| {
        let clean = ImageGray::filled(size, size, 0.5);
        let noise = sample_speckle(size, size, &SpeckleConfig::single_look(seed)).unwrap();
        let noisy = apply_multiplicative(&clean, &noise).unwrap();
        kl_loss(&noisy, &clean, 1.0, &w).unwrap().0
    };
    let mean_over = |size: usize| (0..8).map(|s| value_for(size, 100 + s)).sum::<f64>() / 8.0;
    let (small, medium, large) = (mean_over(32), mean_over(64), mean_over(256));
    println!("kl 32x32 {small:.4}, 64x64 {medium:.4}, 256x256 {large:.4}");
    assert!(value_for(64, 9) < 0.05);
    assert!(small > medium && medium > large);
}
