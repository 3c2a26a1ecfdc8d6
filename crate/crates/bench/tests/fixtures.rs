use affine_hjm::{solve_riccati, validate, PsdMatrix};
use affine_hjm_bench::{psd_inputs, Example};

#[test]
fn example_is_admissible_and_consistent() {
    let ex = Example::new();
    assert!(validate(&ex.params).passed());
    assert_eq!(ex.vol.dim(), ex.params.dim());
    let sol = solve_riccati(&ex.params, &PsdMatrix::identity(2), 1.0, 1e-2).unwrap();
    assert!((sol.phi[sol.len() - 1] - 2.0 * 3f64.ln()).abs() < 1e-6);
}

#[test]
fn inputs_differ_by_seed_and_dimension() {
    assert_ne!(psd_inputs(2, 3, 1), psd_inputs(2, 3, 2));
    assert!(psd_inputs(4, 5, 1).iter().all(|m| m.dim() == 4));
}
