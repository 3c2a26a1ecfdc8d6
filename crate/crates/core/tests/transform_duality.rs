//! Riccati transforms against Monte Carlo expectations.

use affine_hjm::acceptance::example_params_with_jump;
use affine_hjm::mc::estimate_laplace;
use affine_hjm::{
    laplace_transform, simulate, solve_riccati, uniform_grid, AdmissibleParams, Matrix, PsdMatrix, Scheme, SymMatrix,
};

fn check(params: &AdmissibleParams, x0: &PsdMatrix, scheme: Scheme, dt: f64, n: usize, seed: u64, us: &[SymMatrix]) {
    let grid = uniform_grid(1.0, dt).unwrap();
    let ens = simulate(params, x0, &grid, n, seed, scheme).unwrap();
    for u in us {
        let sol = solve_riccati(params, &PsdMatrix::new(u.clone()).unwrap(), 1.0, 1e-3).unwrap();
        let exact = laplace_transform(&sol, x0, 1.0).unwrap();
        let est = estimate_laplace(&ens, u, 1.0).unwrap();
        let z = est.z_against(exact);
        assert!(z.abs() <= 4.0, "{scheme:?} u = {u:?}: mc {} vs {exact} (z = {z:.2})", est.value);
    }
}

fn arguments() -> Vec<SymMatrix> {
    vec![
        SymMatrix::identity(2).scale(0.5),
        SymMatrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 0.3]]).unwrap(),
    ]
}

#[test]
fn general_wishart_exact_scheme() {
    let q = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.0, 0.8]]).unwrap();
    let m = Matrix::from_rows(&[vec![-0.3, 0.1], vec![0.0, -0.5]]).unwrap();
    let params = AdmissibleParams::wishart(3.0, m, q).unwrap();
    let x0 = PsdMatrix::new(SymMatrix::diag(&[0.5, 1.0])).unwrap();
    check(&params, &x0, Scheme::WishartExact, 0.25, 20_000, 21, &arguments());
}

#[test]
fn general_wishart_euler_scheme() {
    let q = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.0, 0.8]]).unwrap();
    let m = Matrix::from_rows(&[vec![-0.3, 0.1], vec![0.0, -0.5]]).unwrap();
    let params = AdmissibleParams::wishart(3.0, m, q).unwrap();
    let x0 = PsdMatrix::new(SymMatrix::diag(&[0.5, 1.0])).unwrap();
    check(&params, &x0, Scheme::EulerProject, 2f64.powi(-7), 20_000, 22, &arguments());
}

#[test]
fn diffusion_with_state_dependent_jumps() {
    let params = example_params_with_jump();
    check(&params, &PsdMatrix::identity(2), Scheme::EulerProject, 2f64.powi(-7), 20_000, 23, &arguments());
}

#[test]
fn transform_at_time_zero_is_the_argument() {
    let params = example_params_with_jump();
    let u = PsdMatrix::new(arguments()[1].clone()).unwrap();
    let sol = solve_riccati(&params, &u, 1.0, 1e-2).unwrap();
    let x = PsdMatrix::new(SymMatrix::diag(&[2.0, 0.5])).unwrap();
    let at_zero = laplace_transform(&sol, &x, 0.0).unwrap();
    assert!((at_zero - (-u.trace_product(&x)).exp()).abs() < 1e-15);
}
