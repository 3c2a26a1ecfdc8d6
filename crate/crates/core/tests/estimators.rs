//! Statistical behaviour of the ensemble estimators.

use affine_hjm::acceptance::example_params;
use affine_hjm::mc::estimate_laplace;
use affine_hjm::pathsim::path_rng;
use affine_hjm::{simulate, two_sample_compare, uniform_grid, EnsembleEstimate, PsdMatrix, Scheme, SymMatrix};
use rand_distr::{Distribution, Exp1};

fn exp_samples(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = path_rng(seed, 0, Scheme::WishartExact);
    (0..n).map(|_| Exp1.sample(&mut rng)).collect()
}

#[test]
fn standard_error_halves_with_four_times_the_paths() {
    let params = example_params();
    let grid = uniform_grid(1.0, 0.25).unwrap();
    let x0 = PsdMatrix::identity(2);
    let u = SymMatrix::identity(2).scale(0.5);
    let small = simulate(&params, &x0, &grid, 10_000, 51, Scheme::WishartExact).unwrap();
    let large = simulate(&params, &x0, &grid, 40_000, 52, Scheme::WishartExact).unwrap();
    let a = estimate_laplace(&small, &u, 1.0).unwrap();
    let b = estimate_laplace(&large, &u, 1.0).unwrap();
    let ratio = a.std_error / b.std_error;
    assert!((ratio - 2.0).abs() < 0.1, "SE ratio {ratio}");
    assert!(two_sample_compare(&a, &b).unwrap().abs() <= 4.0);
}

#[test]
fn standard_error_scales_by_root_two() {
    let a = EnsembleEstimate::from_samples(&exp_samples(1, 50_000)).unwrap();
    let b = EnsembleEstimate::from_samples(&exp_samples(2, 100_000)).unwrap();
    let ratio = a.std_error / b.std_error;
    assert!((ratio - 2f64.sqrt()).abs() < 0.04, "SE ratio {ratio}");
}

#[test]
fn confidence_intervals_cover_the_mean() {
    let covered = (0..400u64)
        .filter(|&seed| {
            let est = EnsembleEstimate::from_samples(&exp_samples(100 + seed, 400)).unwrap();
            est.ci95.0 <= 1.0 && 1.0 <= est.ci95.1
        })
        .count();
    // Binomial(400, 0.95) lies in [361, 399] with overwhelming probability.
    assert!((361..=399).contains(&covered), "{covered} of 400 intervals cover the mean");
}

#[test]
fn z_scores_of_equal_means_are_standard() {
    let zs: Vec<f64> = (0..300u64)
        .map(|seed| {
            let a = EnsembleEstimate::from_samples(&exp_samples(1000 + seed, 500)).unwrap();
            let b = EnsembleEstimate::from_samples(&exp_samples(5000 + seed, 800)).unwrap();
            two_sample_compare(&a, &b).unwrap()
        })
        .collect();
    let mean = zs.iter().sum::<f64>() / zs.len() as f64;
    let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (zs.len() - 1) as f64;
    assert!(mean.abs() < 0.25, "mean z {mean}");
    assert!((var - 1.0).abs() < 0.25, "variance of z {var}");
}
