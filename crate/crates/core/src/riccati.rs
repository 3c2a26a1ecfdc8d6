//! The generalised Riccati system
//!
//! ```text
//! phi'(t) = F(psi(t)),   phi(0) = 0
//! psi'(t) = R(psi(t)),   psi(0) = u
//! ```
//!
//! with `F(u) = Tr[b u] - int (e^{-Tr[u xi]} - 1) m(dxi)` and
//! `R(u) = -2 u alpha u + B^T(u) - int (e^{-Tr[u xi]} - 1) mu(dxi)`, whose
//! solution gives the Laplace transform `E_x[e^{-Tr[u X_t]}] = e^{-phi(t) - Tr[psi(t) x]}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::AdmissibleParams;
use crate::symcone::{self, PsdMatrix, SymMatrix, EPS_PSD};

/// Smallest eigenvalue of `psi` below which integration is abandoned.
pub const EPS_ESCAPE: f64 = 1e-6;
/// Upper bound on the number of integration steps.
pub const MAX_STEPS: usize = 100_000;
/// Default step as a fraction of the horizon.
pub const DEFAULT_STEP_FRACTION: f64 = 1e-3;

fn require_psd(u: &SymMatrix) -> Result<()> {
    let min_eig = u.min_eigenvalue()?;
    if min_eig < -EPS_PSD {
        return Err(Error::Domain(format!(
            "Riccati functions are defined on the PSD cone (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

/// `F(u)`; `u` must be PSD.
pub fn eval_f(params: &AdmissibleParams, u: &SymMatrix) -> Result<f64> {
    u.check_dim(params.dim())?;
    require_psd(u)?;
    Ok(f_unchecked(params, u))
}

/// `R(u)`; `u` must be PSD.
pub fn eval_r(params: &AdmissibleParams, u: &SymMatrix) -> Result<SymMatrix> {
    u.check_dim(params.dim())?;
    require_psd(u)?;
    Ok(r_unchecked(params, u))
}

pub(crate) fn f_unchecked(params: &AdmissibleParams, u: &SymMatrix) -> f64 {
    params.b.trace_product(u) - params.jumps.constant_integral(u)
}

pub(crate) fn r_unchecked(params: &AdmissibleParams, u: &SymMatrix) -> SymMatrix {
    let uau = params.alpha.congruence(u.as_matrix());
    let mut out = &params.drift.adjoint_unchecked(u) - &uau.scale(2.0);
    if !params.jumps.is_empty() {
        out = &out - &params.jumps.linear_integral(u, params.dim());
    }
    out
}

/// `phi` and `psi` on a uniform grid from `0` to `t_end`.
#[derive(Clone, Debug, Serialize)]
pub struct RiccatiSolution {
    pub t_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<SymMatrix>,
    pub u0: SymMatrix,
}

impl RiccatiSolution {
    pub fn t_end(&self) -> f64 {
        *self.t_grid.last().expect("grid is never empty")
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    /// `(phi(t), psi(t))`, linearly interpolated between grid nodes.
    pub fn at(&self, t: f64) -> Result<(f64, SymMatrix)> {
        let t_end = self.t_end();
        if !(0.0..=t_end * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::Range(format!("t = {t} outside the solution horizon [0, {t_end}]")));
        }
        let k = self.t_grid.partition_point(|&s| s <= t);
        if k >= self.t_grid.len() {
            let last = self.t_grid.len() - 1;
            return Ok((self.phi[last], self.psi[last].clone()));
        }
        let (t0, t1) = (self.t_grid[k - 1], self.t_grid[k]);
        let w = (t - t0) / (t1 - t0);
        if w == 0.0 {
            return Ok((self.phi[k - 1], self.psi[k - 1].clone()));
        }
        let phi = (1.0 - w) * self.phi[k - 1] + w * self.phi[k];
        let psi = &self.psi[k - 1].scale(1.0 - w) + &self.psi[k].scale(w);
        Ok((phi, psi))
    }
}

/// Integrates the Riccati system with fixed-step classical RK4.
///
/// The step is `t_end / ceil(t_end / dt)` so that the grid ends exactly at
/// `t_end`. After each step `psi` is projected onto the cone if it left it by
/// less than [`EPS_ESCAPE`]; larger excursions abort with a numerical error.
pub fn solve(params: &AdmissibleParams, u: &PsdMatrix, t_end: f64, dt: f64) -> Result<RiccatiSolution> {
    u.check_dim(params.dim())?;
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Domain(format!("t_end must be a finite non-negative time, got {t_end}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let u0 = u.as_sym().clone();
    if t_end == 0.0 {
        return Ok(RiccatiSolution {
            t_grid: vec![0.0],
            phi: vec![0.0],
            psi: vec![u0.clone()],
            u0,
        });
    }
    let raw = (t_end / dt - 1e-9).ceil().max(1.0);
    if raw > MAX_STEPS as f64 {
        return Err(Error::Range(format!(
            "{raw} steps requested, the cap is {MAX_STEPS}; increase dt"
        )));
    }
    let n = raw as usize;
    let h = t_end / n as f64;

    let mut t_grid = Vec::with_capacity(n + 1);
    let mut phi = Vec::with_capacity(n + 1);
    let mut psi = Vec::with_capacity(n + 1);
    t_grid.push(0.0);
    phi.push(0.0);
    psi.push(u0.clone());

    let mut cur_phi = 0.0;
    let mut cur_psi = u0.clone();
    for k in 1..=n {
        let (dphi, dpsi) = rk4_increment(params, &cur_psi, h);
        cur_phi += dphi;
        cur_psi = &cur_psi + &dpsi;
        if !cur_psi.is_finite() || !cur_phi.is_finite() {
            return Err(Error::Numerical(format!(
                "Riccati solution became non-finite at t = {}",
                k as f64 * h
            )));
        }
        let min_eig = cur_psi.min_eigenvalue()?;
        if min_eig < -EPS_ESCAPE {
            return Err(Error::Numerical(format!(
                "psi left the PSD cone at t = {} (smallest eigenvalue {min_eig:e}); \
                 the parameters may be inadmissible or the step too coarse",
                k as f64 * h
            )));
        }
        if min_eig < 0.0 {
            cur_psi = symcone::project_psd(&cur_psi)?.into_sym();
        }
        t_grid.push(if k == n { t_end } else { k as f64 * h });
        phi.push(cur_phi);
        psi.push(cur_psi.clone());
    }
    Ok(RiccatiSolution { t_grid, phi, psi, u0 })
}

/// [`solve`] with the default step `1e-3 * t_end`.
pub fn solve_default(params: &AdmissibleParams, u: &PsdMatrix, t_end: f64) -> Result<RiccatiSolution> {
    let dt = if t_end > 0.0 { DEFAULT_STEP_FRACTION * t_end } else { 1.0 };
    solve(params, u, t_end, dt)
}

fn rk4_increment(params: &AdmissibleParams, psi: &SymMatrix, h: f64) -> (f64, SymMatrix) {
    let stage = |y: &SymMatrix| (f_unchecked(params, y), r_unchecked(params, y));
    let (f1, r1) = stage(psi);
    let (f2, r2) = stage(&(psi + &r1.scale(0.5 * h)));
    let (f3, r3) = stage(&(psi + &r2.scale(0.5 * h)));
    let (f4, r4) = stage(&(psi + &r3.scale(h)));
    let dphi = h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
    let sum = &(&r1 + &r2.scale(2.0)) + &(&r3.scale(2.0) + &r4);
    (dphi, sum.scale(h / 6.0))
}

/// `e^{-phi(t) - Tr[psi(t) x]}`.
pub fn laplace_transform(sol: &RiccatiSolution, x: &PsdMatrix, t: f64) -> Result<f64> {
    x.check_dim(sol.u0.dim())?;
    let (phi, psi) = sol.at(t)?;
    Ok((-phi - psi.trace_product(x)).exp())
}
