//! Moment oracles for simulated state paths.

use affine_hjm::acceptance::{example_params, example_params_with_jump};
use affine_hjm::sampling::random_admissible;
use affine_hjm::pathsim::path_rng;
use affine_hjm::{
    simulate, uniform_grid, AdmissibleParams, EnsembleEstimate, JumpRay, JumpRayFamily, LinearDriftMap, Matrix,
    PsdMatrix, Scheme, SymMatrix,
};
use proptest::prelude::*;

fn within(est: &EnsembleEstimate, target: f64, k: f64) {
    let z = est.z_against(target);
    assert!(z.abs() <= k, "estimate {} +/- {} vs {target}: z = {z:.2}", est.value, est.std_error);
}

fn entry_estimates(states: &[&SymMatrix]) -> Vec<EnsembleEstimate> {
    let d = states[0].dim();
    let mut out = Vec::new();
    for i in 0..d {
        for j in i..d {
            let s: Vec<f64> = states.iter().map(|x| x.get(i, j)).collect();
            out.push(EnsembleEstimate::from_samples(&s).unwrap());
        }
    }
    out
}

#[test]
fn trace_mean_grows_linearly_from_identity() {
    let params = example_params();
    let grid = uniform_grid(1.0, 2f64.powi(-6)).unwrap();
    for scheme in [Scheme::EulerProject, Scheme::WishartExact] {
        let ens = simulate(&params, &PsdMatrix::identity(2), &grid, 20_000, 11, scheme).unwrap();
        let traces: Vec<f64> = ens.paths.iter().map(|p| p.states.last().unwrap().trace()).collect();
        within(&EnsembleEstimate::from_samples(&traces).unwrap(), 6.0, 4.0);
    }
}

#[test]
fn mean_from_origin_is_two_t_identity() {
    let params = example_params();
    let grid = uniform_grid(0.5, 2f64.powi(-5)).unwrap();
    for scheme in [Scheme::EulerProject, Scheme::WishartExact] {
        let ens = simulate(&params, &PsdMatrix::zeros(2), &grid, 20_000, 12, scheme).unwrap();
        let last: Vec<&SymMatrix> = ens.paths.iter().map(|p| p.states.last().unwrap()).collect();
        let est = entry_estimates(&last);
        within(&est[0], 1.0, 4.0);
        within(&est[1], 0.0, 4.0);
        within(&est[2], 1.0, 4.0);
    }
}

#[test]
fn mean_reverting_drift() {
    let alpha = SymMatrix::identity(2);
    let m = Matrix::identity(2).scale(-0.5);
    let params = AdmissibleParams::new(
        alpha,
        SymMatrix::identity(2).scale(2.0),
        LinearDriftMap::new(m.clone()),
        JumpRayFamily::none(),
        None,
    )
    .unwrap();
    let dt = 2f64.powi(-6);
    let grid = uniform_grid(1.0, dt).unwrap();
    let n = grid.len() - 1;
    // E[X_{k+1}] = E[X_k] + (2I - E[X_k]) dt for the Euler recursion.
    let euler_diag = 2.0 - (1.0 - dt).powi(n as i32);
    let exact_diag = 2.0 - (-1.0f64).exp();
    let x0 = PsdMatrix::identity(2);
    for (scheme, target) in [(Scheme::EulerProject, euler_diag), (Scheme::WishartExact, exact_diag)] {
        let ens = simulate(&params, &x0, &grid, 20_000, 13, scheme).unwrap();
        let last: Vec<&SymMatrix> = ens.paths.iter().map(|p| p.states.last().unwrap()).collect();
        let est = entry_estimates(&last);
        within(&est[0], target, 4.0);
        within(&est[1], 0.0, 4.0);
        within(&est[2], target, 4.0);
    }
}

fn jump_only(theta: f64, lambda: f64, l_state: SymMatrix) -> AdmissibleParams {
    AdmissibleParams::new(
        SymMatrix::zeros(2),
        SymMatrix::zeros(2),
        LinearDriftMap::zero(2),
        JumpRayFamily::new(vec![JumpRay::new(vec![0.6, 0.8], theta, lambda, l_state)]),
        None,
    )
    .unwrap()
}

#[test]
fn jump_only_counts_and_sizes() {
    let params = jump_only(2.0, 3.0, SymMatrix::zeros(2));
    let grid = uniform_grid(1.0, 2f64.powi(-4)).unwrap();
    let x0 = PsdMatrix::identity(2);
    let ens = simulate(&params, &x0, &grid, 20_000, 14, Scheme::EulerProject).unwrap();
    let counts: Vec<f64> = ens.paths.iter().map(|p| p.jumps.len() as f64).collect();
    within(&EnsembleEstimate::from_samples(&counts).unwrap(), 3.0, 4.0);
    let sizes: Vec<f64> = ens.paths.iter().flat_map(|p| p.jumps.iter().map(|j| j.size)).collect();
    within(&EnsembleEstimate::from_samples(&sizes).unwrap(), 0.5, 4.0);
    for p in ens.paths.iter().take(200) {
        let total: f64 = p.jumps.iter().map(|j| j.size).sum();
        let gain = p.states.last().unwrap().trace() - 2.0;
        assert!((gain - total).abs() < 1e-12);
    }
}

#[test]
fn state_dependent_intensity_raises_the_count() {
    let params = jump_only(2.0, 1.0, SymMatrix::identity(2).scale(0.5));
    let grid = uniform_grid(1.0, 2f64.powi(-7)).unwrap();
    let x0 = PsdMatrix::identity(2);
    let ens = simulate(&params, &x0, &grid, 20_000, 15, Scheme::EulerProject).unwrap();
    // Tr X grows by the jump sizes, so with lambda = 1 + Tr[X]/2 the mean
    // intensity m(t) = E[lambda] solves m' = m / 4 with m(0) = 2.
    let target = 8.0 * ((0.25f64).exp() - 1.0);
    let counts: Vec<f64> = ens.paths.iter().map(|p| p.jumps.len() as f64).collect();
    let est = EnsembleEstimate::from_samples(&counts).unwrap();
    assert!((est.value - target).abs() <= 4.0 * est.std_error + 0.01, "{} vs {target}", est.value);
}

#[test]
fn compensated_state_is_a_martingale() {
    let params = example_params_with_jump();
    let ray = &params.jumps.rays[0];
    let dt = 2f64.powi(-6);
    let grid = uniform_grid(1.0, dt).unwrap();
    let x0 = PsdMatrix::identity(2);
    let ens = simulate(&params, &x0, &grid, 20_000, 16, Scheme::EulerProject).unwrap();
    let vv = SymMatrix::outer(&ray.v);
    let residuals: Vec<SymMatrix> = ens
        .paths
        .iter()
        .map(|p| {
            let mut acc = p.states.last().unwrap() - x0.as_sym();
            for x in &p.states[..p.states.len() - 1] {
                let comp = &params.drift_at(x) + &vv.scale(ray.intensity(x) / ray.theta);
                acc = &acc - &comp.scale(dt);
            }
            acc
        })
        .collect();
    let refs: Vec<&SymMatrix> = residuals.iter().collect();
    for est in entry_estimates(&refs) {
        within(&est, 0.0, 4.0);
    }
}

#[test]
fn seeds_reproduce_and_separate_paths() {
    let params = example_params_with_jump();
    let grid = uniform_grid(0.5, 0.05).unwrap();
    let x0 = PsdMatrix::identity(2);
    let a = simulate(&params, &x0, &grid, 8, 1, Scheme::EulerProject).unwrap();
    let b = simulate(&params, &x0, &grid, 8, 1, Scheme::EulerProject).unwrap();
    let c = simulate(&params, &x0, &grid, 8, 2, Scheme::EulerProject).unwrap();
    for ((pa, pb), pc) in a.paths.iter().zip(&b.paths).zip(&c.paths) {
        assert_eq!(pa.states, pb.states);
        assert_eq!(pa.jumps, pb.jumps);
        assert_ne!(pa.states.last(), pc.states.last());
    }
    assert_ne!(a.paths[0].states.last(), a.paths[1].states.last());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_admissible_paths_stay_in_the_cone(seed in any::<u64>(), d in 2usize..4) {
        let params = random_admissible(&mut path_rng(seed, 0, Scheme::EulerProject), d);
        let grid = uniform_grid(1.0, 0.05).unwrap();
        let ens = simulate(&params, &PsdMatrix::identity(d), &grid, 4, seed, Scheme::EulerProject).unwrap();
        for p in &ens.paths {
            for x in &p.states {
                prop_assert!(x.min_eigenvalue().unwrap() >= -1e-10);
                prop_assert!(x.is_finite());
            }
        }
    }
}
