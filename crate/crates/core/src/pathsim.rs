//! Monte Carlo paths of the affine state process
//!
//! ```text
//! dX = (b + B(X)) dt + sqrt(X) dW Q + Q^T dW^T sqrt(X) + jumps
//! ```
//!
//! on a fixed time grid, either by a projected Euler scheme (any admissible
//! parameters) or by exact Gaussian transitions of a matrix Ornstein-Uhlenbeck
//! factor (Wishart parameters with integer index).
//!
//! # Reproducibility
//!
//! Path `i` of a run with seed `s` draws from a ChaCha8 generator whose 32-byte
//! key holds `s` as little-endian bytes 0..8 and an ASCII scheme tag in bytes
//! 8..16 (`"euler\0\0\0"` or `"wishart\0"`), with the stream number set to
//! `i`. Draw order within a step is: the `d * d` Brownian normals row by row,
//! then for each ray a Poisson count followed by (exponential size, uniform
//! time) per jump. Ensembles are therefore bit-identical for a given seed,
//! independent of the number of threads.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{validate, AdmissibleParams};
use crate::symcone::{self, Matrix, PsdMatrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerProject,
    WishartExact,
}

impl Scheme {
    fn tag(self) -> &'static [u8; 8] {
        match self {
            Scheme::EulerProject => b"euler\0\0\0",
            Scheme::WishartExact => b"wishart\0",
        }
    }
}

/// The generator for one path.
pub fn path_rng(seed: u64, path_index: u64, scheme: Scheme) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(scheme.tag());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path_index);
    rng
}

/// `n` equal steps from 0 to `t_end`, with `n = ceil(t_end / dt)`.
pub fn uniform_grid(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || !t_end.is_finite() || !(dt > 0.0) {
        return Err(Error::Grid(format!("need t_end > 0 and dt > 0, got t_end = {t_end}, dt = {dt}")));
    }
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((0..=n).map(|k| if k == n { t_end } else { t_end * k as f64 / n as f64 }).collect())
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 2 {
        return Err(Error::Grid("a time grid needs at least two nodes".into()));
    }
    if t_grid[0] != 0.0 {
        return Err(Error::Grid(format!("time grid must start at 0, starts at {}", t_grid[0])));
    }
    if let Some(w) = t_grid.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::Grid(format!("time grid is not strictly increasing at {} -> {}", w[0], w[1])));
    }
    Ok(())
}

/// Index of `t` on `grid`, allowing a relative mismatch of `1e-9`.
pub fn grid_index(grid: &[f64], t: f64) -> Result<usize> {
    let tol = 1e-9 * (1.0 + t.abs());
    let k = grid.partition_point(|&s| s < t - tol);
    if k < grid.len() && (grid[k] - t).abs() <= tol {
        Ok(k)
    } else {
        Err(Error::Grid(format!("t = {t} is not a grid node")))
    }
}

/// One jump `size * v v^T` of ray `ray`, occurring inside step `step`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub step: usize,
    pub ray: usize,
    pub size: f64,
    pub xi: SymMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub path_index: u64,
}

/// A simulated path. `roots[k]` is the square root of `states[k]` used by
/// the diffusion over step `k`, and `increments[k]` the Brownian increment
/// over that step; both are recorded by the Euler scheme only.
#[derive(Clone, Debug)]
pub struct SamplePath {
    pub t_grid: Arc<[f64]>,
    pub states: Vec<SymMatrix>,
    pub roots: Option<Vec<SymMatrix>>,
    pub increments: Option<Vec<Matrix>>,
    pub jumps: Vec<JumpEvent>,
    pub seed: SeedRecord,
}

impl SamplePath {
    pub fn n_steps(&self) -> usize {
        self.t_grid.len() - 1
    }

    pub fn state_at(&self, t: f64) -> Result<&SymMatrix> {
        Ok(&self.states[grid_index(&self.t_grid, t)?])
    }

    pub fn jumps_in_step(&self, step: usize) -> impl Iterator<Item = &JumpEvent> {
        let lo = self.jumps.partition_point(|j| j.step < step);
        self.jumps[lo..].iter().take_while(move |j| j.step == step)
    }
}

#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub paths: Vec<SamplePath>,
    pub scheme: Scheme,
    pub params: AdmissibleParams,
    pub t_grid: Arc<[f64]>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        grid_index(&self.t_grid, t)
    }
}

/// Result of one Euler step.
#[derive(Clone, Debug)]
pub struct EulerStep {
    pub state: PsdMatrix,
    /// Square root of the new state, from the same eigen-decomposition.
    pub root: SymMatrix,
    /// `(ray, size, fraction of the step elapsed before the jump)`.
    pub jumps: Vec<(usize, f64, f64)>,
}

/// One projected Euler step from `x` with Brownian increment `dw` (entries of
/// variance `dt`). `root` must be the square root of `x`. Jump counts are
/// Poisson with the intensity frozen at `x`.
///
/// Besides the drift and the diffusion `sqrt(x) dW Q + Q^T dW^T sqrt(x)` the
/// step carries the mean-zero second-order term `Q^T dW^T dW Q - d alpha dt`,
/// so that the diffusion part equals `(sqrt(x) + dW Q)^T (sqrt(x) + dW Q)`
/// minus its mean excess. Near the cone boundary this removes the bias that
/// projection alone leaves at order `sqrt(dt)`; with `b = d alpha` and
/// `B = 0` the step reproduces the exact Wishart transition.
pub fn step_euler<R: Rng + ?Sized>(
    params: &AdmissibleParams,
    x: &SymMatrix,
    root: &SymMatrix,
    dw: &Matrix,
    dt: f64,
    rng: &mut R,
) -> Result<EulerStep> {
    let d = params.dim();
    let noise = dw * &params.q;
    let a = root.as_matrix() * &noise;
    let drift = params.drift_at(x);
    let excess = d as f64 * dt;
    let mut next = SymMatrix::from_upper(d, |i, j| {
        let quad: f64 = (0..d).map(|k| noise.get(k, i) * noise.get(k, j)).sum();
        x.get(i, j) + drift.get(i, j) * dt + a.get(i, j) + a.get(j, i) + quad - excess * params.alpha.get(i, j)
    });
    let mut jumps = Vec::new();
    for (r, ray) in params.jumps.rays.iter().enumerate() {
        let mean = ray.intensity(x) * dt;
        if mean <= 0.0 {
            continue;
        }
        let count: f64 = rng.sample(Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?);
        for _ in 0..count as u64 {
            let size = rng.sample::<f64, _>(Exp1) / ray.theta;
            let frac: f64 = rng.random();
            next = &next + &ray.jump(size);
            jumps.push((r, size, frac));
        }
    }
    let (state, root) = symcone::project_and_sqrt(&next)?;
    Ok(EulerStep { state, root, jumps })
}

fn brownian<R: Rng + ?Sized>(rng: &mut R, d: usize, dt: f64) -> Matrix {
    let s = dt.sqrt();
    Matrix::from_fn(d, |_, _| s * rng.sample::<f64, _>(StandardNormal))
}

/// Per-step data of the exact Wishart transition `y -> y e^{M^T h} + N(0, C_h)`.
#[derive(Clone, Debug)]
struct WishartTransition {
    propagator: Matrix,
    noise_root: Matrix,
}

#[derive(Clone, Debug)]
struct WishartSetup {
    delta: usize,
    y0: Matrix,
    steps: Vec<WishartTransition>,
}

fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), |i, j| m[(i, j)])
}

/// `e^{M^T h}` and `C_h = int_0^h e^{M s} alpha e^{M^T s} ds` via the block
/// exponential of `[[-M, alpha], [0, M^T]] h`.
pub fn wishart_transition_moments(m: &Matrix, alpha: &SymMatrix, h: f64) -> (Matrix, SymMatrix) {
    let d = m.dim();
    let mm = to_nalgebra(m);
    let mut block = DMatrix::<f64>::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&(-&mm * h));
    block.view_mut((0, d), (d, d)).copy_from(&(to_nalgebra(alpha.as_matrix()) * h));
    block.view_mut((d, d), (d, d)).copy_from(&(mm.transpose() * h));
    let e = block.exp();
    let f12 = e.view((0, d), (d, d)).into_owned();
    let f22 = e.view((d, d), (d, d)).into_owned();
    let cov = f22.transpose() * f12;
    (from_nalgebra(&f22), SymMatrix::symmetrize(&from_nalgebra(&cov)))
}

impl WishartSetup {
    fn new(params: &AdmissibleParams, x0: &PsdMatrix, t_grid: &[f64]) -> Result<Self> {
        let d = params.dim();
        let delta = params.wishart_index().ok_or_else(|| {
            Error::Unsupported("exact simulation needs b = delta * alpha, no G terms and no jumps".into())
        })?;
        // Without noise every index describes the same process.
        let delta = if params.alpha.max_abs() == 0.0 { delta.max(d as f64) } else { delta };
        let rounded = delta.round();
        if (delta - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded < d as f64 {
            return Err(Error::Unsupported(format!(
                "exact simulation needs an integer index delta >= d = {d}, got {delta}"
            )));
        }
        let delta = rounded as usize;
        let root = symcone::sqrt_psd(x0)?;
        let y0 = root.as_matrix().clone();
        let mut cache: Vec<(f64, WishartTransition)> = Vec::new();
        let mut steps = Vec::with_capacity(t_grid.len() - 1);
        for w in t_grid.windows(2) {
            let h = w[1] - w[0];
            let hit = cache.iter().find(|(ch, _)| (ch - h).abs() <= 1e-14 * h);
            let tr = match hit {
                Some((_, tr)) => tr.clone(),
                None => {
                    let (propagator, cov) = wishart_transition_moments(&params.drift.m, &params.alpha, h);
                    let noise_root = symcone::sqrt_psd(&symcone::project_psd(&cov)?)?.into_sym().into_matrix();
                    let tr = WishartTransition { propagator, noise_root };
                    cache.push((h, tr.clone()));
                    tr
                }
            };
            steps.push(tr);
        }
        Ok(Self { delta, y0, steps })
    }
}

/// Rows `0..d` of the `delta x d` factor hold `sqrt(x0)`; the rest start at zero.
fn simulate_wishart_path(setup: &WishartSetup, d: usize, grid: &Arc<[f64]>, seed: SeedRecord) -> SamplePath {
    let mut rng = path_rng(seed.seed, seed.path_index, Scheme::WishartExact);
    let mut y: Vec<Vec<f64>> = (0..setup.delta)
        .map(|r| if r < d { (0..d).map(|j| setup.y0.get(r, j)).collect() } else { vec![0.0; d] })
        .collect();
    let gram = |y: &[Vec<f64>]| {
        SymMatrix::from_upper(d, |i, j| y.iter().map(|row| row[i] * row[j]).sum())
    };
    let mut states = Vec::with_capacity(grid.len());
    states.push(gram(&y));
    let mut z = vec![0.0; d];
    for tr in &setup.steps {
        for row in y.iter_mut() {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let new: Vec<f64> = (0..d)
                .map(|j| {
                    (0..d)
                        .map(|k| row[k] * tr.propagator.get(k, j) + z[k] * tr.noise_root.get(k, j))
                        .sum()
                })
                .collect();
            *row = new;
        }
        states.push(gram(&y));
    }
    SamplePath {
        t_grid: grid.clone(),
        states,
        roots: None,
        increments: None,
        jumps: Vec::new(),
        seed,
    }
}

fn simulate_euler_path(
    params: &AdmissibleParams,
    x0: &PsdMatrix,
    x0_root: &SymMatrix,
    grid: &Arc<[f64]>,
    seed: SeedRecord,
) -> Result<SamplePath> {
    let d = params.dim();
    let mut rng = path_rng(seed.seed, seed.path_index, Scheme::EulerProject);
    let n = grid.len() - 1;
    let mut states = Vec::with_capacity(n + 1);
    let mut roots = Vec::with_capacity(n + 1);
    let mut increments = Vec::with_capacity(n);
    let mut jumps = Vec::new();
    states.push(x0.as_sym().clone());
    roots.push(x0_root.clone());
    for k in 0..n {
        let (t0, t1) = (grid[k], grid[k + 1]);
        let h = t1 - t0;
        let dw = brownian(&mut rng, d, h);
        let step = step_euler(params, &states[k], &roots[k], &dw, h, &mut rng)?;
        for (ray, size, frac) in step.jumps {
            jumps.push(JumpEvent {
                time: t0 + frac * h,
                step: k,
                ray,
                size,
                xi: params.jumps.rays[ray].jump(size),
            });
        }
        increments.push(dw);
        states.push(step.state.into_sym());
        roots.push(step.root);
    }
    Ok(SamplePath {
        t_grid: grid.clone(),
        states,
        roots: Some(roots),
        increments: Some(increments),
        jumps,
        seed,
    })
}

/// A validated simulation set-up that produces individual paths on demand.
pub struct Simulator<'a> {
    params: &'a AdmissibleParams,
    x0: PsdMatrix,
    x0_root: SymMatrix,
    grid: Arc<[f64]>,
    seed: u64,
    scheme: Scheme,
    wishart: Option<WishartSetup>,
}

impl<'a> Simulator<'a> {
    /// Validates `params` and the grid, and precomputes exact transitions.
    pub fn new(
        params: &'a AdmissibleParams,
        x0: &PsdMatrix,
        t_grid: &[f64],
        seed: u64,
        scheme: Scheme,
    ) -> Result<Self> {
        x0.check_dim(params.dim())?;
        validate(params).into_result()?;
        check_grid(t_grid)?;
        let wishart = match scheme {
            Scheme::WishartExact => Some(WishartSetup::new(params, x0, t_grid)?),
            Scheme::EulerProject => None,
        };
        Ok(Self {
            params,
            x0: x0.clone(),
            x0_root: symcone::sqrt_psd(x0)?.into_sym(),
            grid: t_grid.into(),
            seed,
            scheme,
            wishart,
        })
    }

    pub fn t_grid(&self) -> &Arc<[f64]> {
        &self.grid
    }

    pub fn path(&self, path_index: u64) -> Result<SamplePath> {
        let seed = SeedRecord {
            seed: self.seed,
            path_index,
        };
        match &self.wishart {
            Some(setup) => Ok(simulate_wishart_path(setup, self.params.dim(), &self.grid, seed)),
            None => simulate_euler_path(self.params, &self.x0, &self.x0_root, &self.grid, seed),
        }
    }

    /// Applies `f` to each of `n_paths` paths in parallel without keeping the
    /// paths; results come back in path order.
    pub fn map<T, F>(&self, n_paths: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&SamplePath) -> T + Sync,
    {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| self.path(i).map(|p| f(&p)))
            .collect()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
}

/// Simulates and keeps `n_paths` paths.
pub fn simulate(
    params: &AdmissibleParams,
    x0: &PsdMatrix,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<PathEnsemble> {
    let sim = Simulator::new(params, x0, t_grid, seed, scheme)?;
    let paths = sim.map(n_paths, |p| p.clone())?;
    Ok(PathEnsemble {
        paths,
        scheme,
        params: params.clone(),
        t_grid: sim.grid.clone(),
    })
}

/// [`simulate`] restricted to exact Wishart transitions.
pub fn simulate_wishart_exact(
    params: &AdmissibleParams,
    x0: &PsdMatrix,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate(params, x0, t_grid, n_paths, seed, Scheme::WishartExact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{JumpRay, JumpRayFamily, LinearDriftMap};

    fn i2() -> SymMatrix {
        SymMatrix::identity(2)
    }

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let p = AdmissibleParams::new(
            SymMatrix::zeros(2),
            SymMatrix::zeros(2),
            LinearDriftMap::zero(2),
            JumpRayFamily::none(),
            Some(Matrix::zeros(2)),
        )
        .unwrap();
        let x = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let root = symcone::sqrt_psd(&PsdMatrix::new(x.clone()).unwrap()).unwrap().into_sym();
        let mut rng = path_rng(1, 0, Scheme::EulerProject);
        let dw = brownian(&mut rng, 2, 0.1);
        let out = step_euler(&p, &x, &root, &dw, 0.1, &mut rng).unwrap();
        assert!((out.state.as_sym() - &x).max_abs() < 1e-14);

        let x0 = PsdMatrix::new(x.clone()).unwrap();
        let ens = simulate(&p, &x0, &uniform_grid(1.0, 0.25).unwrap(), 1, 3, Scheme::EulerProject).unwrap();
        for s in &ens.paths[0].states {
            assert!((s - &x).max_abs() < 1e-14);
        }
    }

    #[test]
    fn first_order_diffusion_vanishes_at_origin() {
        let q = Matrix::from_rows(&[vec![0.3, -2.0], vec![1.5, 0.7]]).unwrap();
        let alpha = SymMatrix::symmetrize(&(&q.transpose() * &q));
        let p = AdmissibleParams::new(alpha.clone(), i2(), LinearDriftMap::zero(2), JumpRayFamily::none(), Some(q.clone()))
            .unwrap();
        let mut rng = path_rng(5, 0, Scheme::EulerProject);
        let dw = brownian(&mut rng, 2, 0.1);
        let z = SymMatrix::zeros(2);
        let out = step_euler(&p, &z, &z, &dw, 0.1, &mut rng).unwrap();
        let y = &dw * &q;
        let expected = &(&i2().scale(0.1) + &SymMatrix::symmetrize(&(&y.transpose() * &y))) - &alpha.scale(0.2);
        let expected = symcone::project_psd(&expected).unwrap();
        assert!((out.state.as_sym() - expected.as_sym()).max_abs() < 1e-14);

        let quiet = AdmissibleParams::new(SymMatrix::zeros(2), i2(), LinearDriftMap::zero(2), JumpRayFamily::none(), None)
            .unwrap();
        let out = step_euler(&quiet, &z, &z, &dw, 0.1, &mut rng).unwrap();
        assert!((out.state.as_sym() - &i2().scale(0.1)).max_abs() < 1e-15);
    }

    #[test]
    fn reproduces_exact_wishart_transition_when_b_is_d_alpha() {
        let p = AdmissibleParams::scaled_identity_wishart(2, 2.0);
        let x = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let root = symcone::sqrt_psd(&PsdMatrix::new(x.clone()).unwrap()).unwrap().into_sym();
        let mut rng = path_rng(8, 0, Scheme::EulerProject);
        let dw = brownian(&mut rng, 2, 0.01);
        let out = step_euler(&p, &x, &root, &dw, 0.01, &mut rng).unwrap();
        let y = root.as_matrix() + &dw;
        let gram = SymMatrix::symmetrize(&(&y.transpose() * &y));
        assert!((out.state.as_sym() - &gram).max_abs() < 1e-13);
    }

    #[test]
    fn grids() {
        let g = uniform_grid(1.0, 0.25).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid_index(&g, 0.75).unwrap(), 3);
        assert!(grid_index(&g, 0.7).is_err());
        assert!(uniform_grid(0.0, 0.1).is_err());
        assert!(check_grid(&[0.0, 0.5, 0.5]).is_err());
        assert!(check_grid(&[0.1, 0.5]).is_err());
    }

    #[test]
    fn invalid_params_rejected_before_work() {
        let p = AdmissibleParams::scaled_identity_wishart(2, 0.5);
        let x0 = PsdMatrix::identity(2);
        let err = simulate(&p, &x0, &uniform_grid(1.0, 0.1).unwrap(), 10, 1, Scheme::EulerProject);
        assert!(matches!(err, Err(Error::InvalidParams(_))));
    }

    #[test]
    fn exact_scheme_rejects_unsupported_specs() {
        let x0 = PsdMatrix::identity(2);
        let g = uniform_grid(1.0, 0.1).unwrap();
        let p = AdmissibleParams::scaled_identity_wishart(2, 2.5);
        assert!(matches!(simulate_wishart_exact(&p, &x0, &g, 2, 1), Err(Error::Unsupported(_))));
        let mut pj = AdmissibleParams::scaled_identity_wishart(2, 2.0);
        pj.jumps = JumpRayFamily::new(vec![JumpRay::new(vec![1.0, 0.0], 1.0, 1.0, SymMatrix::zeros(2))]);
        assert!(matches!(simulate_wishart_exact(&pj, &x0, &g, 2, 1), Err(Error::Unsupported(_))));
        let q = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.0, 0.8]]).unwrap();
        let pq = AdmissibleParams::wishart(3.0, Matrix::zeros(2), q).unwrap();
        assert!(simulate_wishart_exact(&pq, &x0, &g, 2, 1).is_ok());
    }

    #[test]
    fn exact_scheme_without_noise_is_constant() {
        let p = AdmissibleParams::wishart(2.0, Matrix::zeros(2), Matrix::zeros(2)).unwrap();
        let x0 = PsdMatrix::new(SymMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.5]]).unwrap()).unwrap();
        let ens = simulate_wishart_exact(&p, &x0, &uniform_grid(1.0, 0.1).unwrap(), 3, 9).unwrap();
        for path in &ens.paths {
            for s in &path.states {
                assert!((s - x0.as_sym()).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transition_moments_for_scalar_drift() {
        // M = -k I: e^{M^T h} = e^{-kh} I and C_h = (1 - e^{-2kh}) / (2k) alpha.
        let k = 0.7;
        let h = 0.3;
        let alpha = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let (prop, cov) = wishart_transition_moments(&Matrix::identity(2).scale(-k), &alpha, h);
        assert!((&prop - &Matrix::identity(2).scale((-k * h).exp())).max_abs() < 1e-14);
        let expect = alpha.scale((1.0 - (-2.0 * k * h).exp()) / (2.0 * k));
        assert!((&cov - &expect).max_abs() < 1e-14);
    }

    #[test]
    fn seed_determinism_and_thread_independence() {
        let mut p = AdmissibleParams::scaled_identity_wishart(2, 2.0);
        p.jumps = JumpRayFamily::new(vec![JumpRay::new(vec![0.6, 0.8], 2.0, 0.5, i2().scale(0.3))]);
        let x0 = PsdMatrix::identity(2);
        let g = uniform_grid(1.0, 1.0 / 32.0).unwrap();
        let a = simulate(&p, &x0, &g, 16, 42, Scheme::EulerProject).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate(&p, &x0, &g, 16, 42, Scheme::EulerProject).unwrap());
        for (pa, pb) in a.paths.iter().zip(&b.paths) {
            assert_eq!(pa.states, pb.states);
            assert_eq!(pa.jumps, pb.jumps);
        }
        let c = simulate(&p, &x0, &g, 16, 43, Scheme::EulerProject).unwrap();
        assert_ne!(a.paths[0].states.last(), c.paths[0].states.last());
        assert_ne!(a.paths[0].states.last(), a.paths[1].states.last());
    }

    #[test]
    fn states_stay_in_cone() {
        let mut p = AdmissibleParams::wishart(1.0, Matrix::identity(2).scale(-1.0), Matrix::identity(2).scale(1.5))
            .unwrap();
        p.jumps = JumpRayFamily::new(vec![JumpRay::new(vec![1.0, 0.0], 3.0, 1.0, SymMatrix::zeros(2))]);
        let x0 = PsdMatrix::zeros(2);
        let sim = Simulator::new(&p, &x0, &uniform_grid(2.0, 0.05).unwrap(), 11, Scheme::EulerProject).unwrap();
        let worst = sim
            .map(200, |path| {
                path.states.iter().map(|s| s.min_eigenvalue().unwrap()).fold(f64::INFINITY, f64::min)
            })
            .unwrap()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(worst >= -symcone::EPS_PSD, "{worst}");
    }

    #[test]
    fn jump_log_is_consistent() {
        let mut p = AdmissibleParams::scaled_identity_wishart(2, 1.0);
        p.jumps = JumpRayFamily::new(vec![JumpRay::new(vec![0.0, 1.0], 1.0, 5.0, SymMatrix::zeros(2))]);
        let sim = Simulator::new(&p, &PsdMatrix::identity(2), &uniform_grid(1.0, 0.1).unwrap(), 2, Scheme::EulerProject)
            .unwrap();
        let path = sim.path(0).unwrap();
        assert!(!path.jumps.is_empty());
        for j in &path.jumps {
            assert!(j.size > 0.0);
            assert!(path.t_grid[j.step] <= j.time && j.time <= path.t_grid[j.step + 1]);
            assert_eq!(j.xi, SymMatrix::diag(&[0.0, j.size]));
        }
        let total: usize = (0..path.n_steps()).map(|k| path.jumps_in_step(k).count()).sum();
        assert_eq!(total, path.jumps.len());
    }
}
