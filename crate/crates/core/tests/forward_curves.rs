//! Pathwise and ensemble oracles for forward curves, bonds and yields.

use affine_hjm::acceptance::{example_params, example_params_with_jump, inverse_sqrt_example_vol};
use affine_hjm::mc::estimate_discounted_bond;
use affine_hjm::{
    evolve_forward, short_rate, simulate, uniform_grid, yield_compact, yield_direct, CurveDriver, InitialCurve,
    MeasureChange, PsdMatrix, Scheme, Simulator, SymMatrix, VolatilitySpec,
};

fn sigma0() -> SymMatrix {
    SymMatrix::identity(2).scale(0.1)
}

/// Short rate of the exponentially decaying volatility through its
/// three-factor Markov representation, advanced step by step.
#[test]
fn short_rate_matches_markov_realisation() {
    let beta = 1.3;
    let params = example_params();
    let vol = VolatilitySpec::exponential(beta, sigma0()).unwrap();
    let curve = InitialCurve::from_nodes(vec![(0.0, 0.01), (3.0, 0.04)]).unwrap();
    let dt = 2f64.powi(-10);
    let grid = uniform_grid(1.0, dt).unwrap();
    let sim = Simulator::new(&params, &PsdMatrix::identity(2), &grid, 31, Scheme::EulerProject).unwrap();
    let s0 = sigma0().into_matrix();
    let qs = &params.q * &s0;
    let obs = [0.25, 0.5, 1.0];
    for path_index in 0..5 {
        let path = sim.path(path_index).unwrap();
        let surface = evolve_forward(&params, &vol, &MeasureChange::none(), &curve, &path, &obs, &obs).unwrap();
        let roots = path.roots.as_ref().unwrap();
        let dws = path.increments.as_ref().unwrap();
        let (decay, decay2) = ((-beta * dt).exp(), (-2.0 * beta * dt).exp());
        let (mut a, mut b, mut z) = (0.0, 0.0, 0.0);
        for n in 0..grid.len() {
            let t = grid[n];
            if let Some(&t_obs) = obs.iter().find(|o| (**o - t).abs() < 1e-12) {
                let oracle = curve.forward(t) + 4.0 / beta * (a - b) + 2.0 * z;
                let r = short_rate(&surface, t_obs).unwrap();
                assert!((r - oracle).abs() <= 1e-10 * oracle.abs().max(1e-3), "t = {t}: {r} vs {oracle}");
            }
            if n + 1 == grid.len() {
                break;
            }
            let x = path.states[n].as_matrix();
            let quad = (&(&qs * x) * &qs.transpose()).trace();
            let dw = (&(&(&s0 * roots[n].as_matrix()) * &dws[n]) * &params.q).trace();
            a = decay * (a + quad * dt);
            b = decay2 * (b + quad * dt);
            z = decay * (z + dw);
        }
    }
}

#[test]
fn zero_volatility_short_rate_is_the_initial_forward() {
    let params = example_params_with_jump();
    let vol = VolatilitySpec::inverse_sqrt(SymMatrix::zeros(2)).unwrap();
    let curve = InitialCurve::from_nodes(vec![(0.0, 0.01), (1.0, 0.03)]).unwrap();
    let grid = uniform_grid(1.0, 0.125).unwrap();
    let sim = Simulator::new(&params, &PsdMatrix::identity(2), &grid, 32, Scheme::EulerProject).unwrap();
    let path = sim.path(0).unwrap();
    let surface = evolve_forward(&params, &vol, &MeasureChange::none(), &curve, &path, &grid, &grid).unwrap();
    for &t in &grid {
        assert_eq!(short_rate(&surface, t).unwrap(), curve.forward(t));
    }
}

#[test]
fn realised_quadratic_variation_of_log_bond() {
    let params = example_params();
    let vol = inverse_sqrt_example_vol();
    let curve = InitialCurve::flat(0.02).unwrap();
    let grid = uniform_grid(1.0, 2f64.powi(-8)).unwrap();
    let sim = Simulator::new(&params, &PsdMatrix::identity(2), &grid, 33, Scheme::EulerProject).unwrap();
    let n = grid.len() - 1;
    let maturity = 3.0;
    let ratios = sim
        .map(50, |p| {
            let driver = CurveDriver::new(&params, &vol, &MeasureChange::none(), &curve, p).unwrap();
            let logs: Vec<f64> = (0..=n).map(|k| driver.discounted_bond(k, maturity).unwrap().ln()).collect();
            let realised: f64 = logs.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            realised / driver.log_bond_quadratic_variation(n, maturity)
        })
        .unwrap();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "mean realised / predicted = {mean}");
}

#[test]
fn discounted_bonds_are_martingales_with_jumps() {
    let params = example_params_with_jump();
    let vol = inverse_sqrt_example_vol();
    let curve = InitialCurve::from_nodes(vec![(0.0, 0.01), (5.0, 0.03)]).unwrap();
    let mc = MeasureChange::none();
    let grid = uniform_grid(1.0, 2f64.powi(-7)).unwrap();
    let ens = simulate(&params, &PsdMatrix::identity(2), &grid, 20_000, 34, Scheme::EulerProject).unwrap();
    for (t, maturity) in [(0.5, 2.0), (1.0, 5.0)] {
        let est = estimate_discounted_bond(&vol, &mc, &curve, &ens, t, maturity).unwrap();
        let p0 = (-curve.integral(0.0, maturity)).exp();
        let z = est.z_against(p0);
        assert!(z.abs() <= 4.0, "(t,T) = ({t},{maturity}): {} vs {p0}, z = {z:.2}", est.value);
    }
}

#[test]
fn direct_and_compact_yields_agree_with_jumps() {
    let params = example_params_with_jump();
    let vol = inverse_sqrt_example_vol();
    let curve = InitialCurve::flat(0.02).unwrap();
    let mc = MeasureChange {
        gamma: Some(affine_hjm::Matrix::identity(2).scale(0.2)),
        k: vec![1.3],
    };
    let grid = uniform_grid(1.0, 2f64.powi(-10)).unwrap();
    let maturities = uniform_grid(5.0, 2f64.powi(-6)).unwrap();
    let sim = Simulator::new(&params, &PsdMatrix::identity(2), &grid, 35, Scheme::EulerProject).unwrap();
    for i in 0..10 {
        let path = sim.path(i).unwrap();
        let surface = evolve_forward(&params, &vol, &mc, &curve, &path, &[0.5, 1.0], &maturities).unwrap();
        for (t, maturity) in [(0.5, 1.0), (0.5, 5.0), (1.0, 2.0), (1.0, 5.0)] {
            let direct = yield_direct(&surface, t, maturity).unwrap();
            let compact = yield_compact(surface.driver(), t, maturity).unwrap();
            assert!((direct - compact.total).abs() <= 2e-2, "({t},{maturity}): {direct} vs {}", compact.total);
            let parts = compact.initial + compact.quadratic + compact.compensated_jump_total() + compact.brownian;
            assert!((parts - compact.total).abs() < 1e-12);
        }
    }
}
