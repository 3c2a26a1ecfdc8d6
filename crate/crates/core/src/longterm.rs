//! Long-term asymptotics of the yield curve.
//!
//! With `Gamma(t,T) = Sigma(t,T) X_t Sigma(t,T)`, the long-term drift and
//! volatility are `mu_inf(t) = lim Gamma(t,T) / (T - t)` and
//! `sigma_inf(t) = lim Sigma(t,T) / (T - t)`. When they exist, the long-term
//! yield is `ell_t = ell_0 + 2 int_0^t Tr[Q mu_inf(s) Q^T] ds`, which is
//! non-decreasing and unaffected by an equivalent change of measure.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjm::{big_sigma, MeasureChange, VolKind, VolatilitySpec};
use crate::params::AdmissibleParams;
use crate::symcone::{project_psd, Matrix, SymMatrix};

/// Default long-maturity ladder (years) for limits in `T`.
pub const DEFAULT_LADDER: [f64; 5] = [25.0, 50.0, 100.0, 200.0, 400.0];
/// Default ladder for decay classification (three decades).
pub const CLASSIFY_LADDER: [f64; 7] = [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0];
/// Number of trailing ladder points used by the extrapolation.
pub const EXTRAPOLATION_POINTS: usize = 4;

/// How the long-term yield behaves over time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClass {
    Infinite,
    Constant,
    NonDecreasing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub class: DecayClass,
    /// Fitted log-log slope of `||sigma(t,T)||` in `T - t`, when fitted.
    pub slope: Option<f64>,
    pub warning: Option<String>,
}

/// A limit in `T` estimated from a finite ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    pub value: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub points_used: usize,
}

/// Fits `a + c1 / sqrt(tau) + c2 / tau` to the last few `(tau, y)` points
/// and returns `a`. With fewer than three points the `1 / tau` term is
/// dropped; a single point is returned as is.
pub fn extrapolate(tau: &[f64], y: &[f64]) -> Result<Extrapolation> {
    if tau.len() != y.len() || tau.is_empty() {
        return Err(Error::Grid("extrapolation needs matching non-empty ladders".into()));
    }
    if tau.iter().any(|t| !(*t > 0.0)) || tau.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("extrapolation ladder must be positive and strictly increasing".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value on the extrapolation ladder".into()));
    }
    let n = tau.len().min(EXTRAPOLATION_POINTS);
    let (tau, y) = (&tau[tau.len() - n..], &y[y.len() - n..]);
    if n == 1 {
        return Ok(Extrapolation {
            value: y[0],
            residual: 0.0,
            points_used: 1,
        });
    }
    let cols = if n >= 3 { 3 } else { 2 };
    let design = DMatrix::from_fn(n, cols, |i, j| tau[i].powf(-0.5 * j as f64));
    let rhs = DVector::from_column_slice(y);
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(format!("extrapolation fit failed: {e}")))?;
    let fitted = &design * &coef;
    let residual = ((&fitted - &rhs).norm_squared() / n as f64).sqrt();
    Ok(Extrapolation {
        value: coef[0],
        residual,
        points_used: n,
    })
}

fn check_ladder(t: f64, ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() || ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("maturity ladder must be non-empty and strictly increasing".into()));
    }
    if !(ladder[0] > t) {
        return Err(Error::Grid(format!("maturity ladder must lie beyond t = {t}")));
    }
    Ok(())
}

/// `Gamma(t,T) = Sigma(t,T) x Sigma(t,T)`.
pub fn gamma(vol: &VolatilitySpec, x: &SymMatrix, t: f64, maturity: f64) -> Result<SymMatrix> {
    let s = big_sigma(vol, t, maturity)?;
    Ok(x.congruence(s.as_matrix()))
}

/// Closed-form `mu_inf`: zero for exponential decay, `4 sigma0 x sigma0`
/// for the inverse square root.
pub fn mu_inf_closed(vol: &VolatilitySpec, x: &SymMatrix, _t: f64) -> Result<SymMatrix> {
    x.check_dim(vol.dim())?;
    match vol.kind {
        VolKind::ExponentialDecay { .. } => Ok(SymMatrix::zeros(vol.dim())),
        VolKind::InverseSqrt => Ok(x.congruence(vol.sigma0.as_matrix()).scale(4.0)),
        VolKind::Tabulated { .. } => Err(Error::Unsupported(
            "no closed-form long-term drift for a tabulated volatility; use the numeric estimate".into(),
        )),
    }
}

/// An entrywise extrapolated matrix limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixLimit {
    pub value: SymMatrix,
    /// Largest residual over the entries.
    pub residual: f64,
    /// The matrices on the ladder.
    pub ladder_values: Vec<SymMatrix>,
}

fn matrix_limit(t: f64, ladder: &[f64], values: Vec<SymMatrix>) -> Result<MatrixLimit> {
    let d = values[0].dim();
    let tau: Vec<f64> = ladder.iter().map(|m| m - t).collect();
    let mut residual: f64 = 0.0;
    let mut fits = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let y: Vec<f64> = values.iter().map(|m| m.get(i, j)).collect();
            let fit = if y.iter().all(|v| *v == 0.0) {
                Extrapolation {
                    value: 0.0,
                    residual: 0.0,
                    points_used: y.len(),
                }
            } else {
                extrapolate(&tau, &y)?
            };
            residual = residual.max(fit.residual);
            fits[i * d + j] = fit.value;
        }
    }
    Ok(MatrixLimit {
        value: SymMatrix::from_upper(d, |i, j| fits[i * d + j]),
        residual,
        ladder_values: values,
    })
}

/// `mu_inf(t)` from `Gamma(t,T) / (T - t)` on a maturity ladder. The
/// extrapolated matrix is projected onto the PSD cone, where every term of
/// the ladder lies.
pub fn mu_inf_numeric(vol: &VolatilitySpec, x: &SymMatrix, t: f64, ladder: &[f64]) -> Result<MatrixLimit> {
    x.check_dim(vol.dim())?;
    check_ladder(t, ladder)?;
    let values = ladder
        .iter()
        .map(|&m| gamma(vol, x, t, m).map(|g| g.scale(1.0 / (m - t))))
        .collect::<Result<Vec<_>>>()?;
    let mut limit = matrix_limit(t, ladder, values)?;
    limit.value = project_psd(&limit.value)?.into_sym();
    Ok(limit)
}

/// `sigma_inf(t)` from `Sigma(t,T) / (T - t)` on a maturity ladder.
pub fn sigma_inf_numeric(vol: &VolatilitySpec, t: f64, ladder: &[f64]) -> Result<MatrixLimit> {
    check_ladder(t, ladder)?;
    let values = ladder
        .iter()
        .map(|&m| big_sigma(vol, t, m).map(|s| s.scale(1.0 / (m - t))))
        .collect::<Result<Vec<_>>>()?;
    matrix_limit(t, ladder, values)
}

/// Decay class of the volatility in maturity.
///
/// Closed-form kinds are classified directly: exponential decay is faster
/// than `1 / (T - t)` and gives a constant long-term yield, the inverse
/// square root gives a non-decreasing one. Tabulated profiles are classified
/// by the log-log slope `rho` of `g` on the ladder: `rho >= -0.25` infinite,
/// `-0.75 <= rho < -0.25` non-decreasing, `rho < -0.75` constant, with a
/// warning within `0.1` of a boundary.
pub fn classify_decay(vol: &VolatilitySpec, probe_t: f64, ladder: &[f64]) -> Result<Classification> {
    check_ladder(probe_t, ladder)?;
    let span = (ladder[ladder.len() - 1] - probe_t) / (ladder[0] - probe_t);
    if span < 100.0 {
        return Err(Error::Grid(format!(
            "classification ladder must span at least two decades in T - t (spans {span:.1}x)"
        )));
    }
    let direct = |class| {
        Ok(Classification {
            class,
            slope: None,
            warning: None,
        })
    };
    if vol.is_zero() {
        return direct(DecayClass::Constant);
    }
    match vol.kind {
        VolKind::ExponentialDecay { .. } => return direct(DecayClass::Constant),
        VolKind::InverseSqrt => return direct(DecayClass::NonDecreasing),
        VolKind::Tabulated { .. } => {}
    }
    let pts: Vec<(f64, f64)> = ladder.iter().map(|&m| ((m - probe_t).ln(), vol.g(m - probe_t))).collect();
    if pts.iter().any(|p| p.1 <= 0.0) {
        // vanishing volatility at long maturities decays faster than any power
        return direct(DecayClass::Constant);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let rho = sxy / sxx;
    let class = if rho >= -0.25 {
        DecayClass::Infinite
    } else if rho >= -0.75 {
        DecayClass::NonDecreasing
    } else {
        DecayClass::Constant
    };
    let warning = [-0.25, -0.75]
        .iter()
        .find(|b| (rho - **b).abs() <= 0.1)
        .map(|b| format!("fitted slope {rho:.3} lies within 0.1 of the class boundary {b}"));
    Ok(Classification {
        class,
        slope: Some(rho),
        warning,
    })
}

/// `Tr[Q mu Q^T]`.
pub fn drift_trace(q: &Matrix, mu: &SymMatrix) -> f64 {
    (&(q * mu.as_matrix()) * &q.transpose()).trace()
}

/// Long-term quantities along one path.
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticProfile {
    pub t_grid: Vec<f64>,
    pub sigma_inf: Vec<SymMatrix>,
    pub mu_inf: Vec<SymMatrix>,
    pub ell: Vec<f64>,
    pub classification: Classification,
}

fn mu_inf_at(vol: &VolatilitySpec, x: &SymMatrix, t: f64, ladder: &[f64]) -> Result<SymMatrix> {
    if vol.closed_sigma_available() {
        mu_inf_closed(vol, x, t)
    } else {
        let shifted: Vec<f64> = ladder.iter().map(|m| m + t).collect();
        Ok(mu_inf_numeric(vol, x, t, &shifted)?.value)
    }
}

/// `ell_t = ell_0 + 2 int_0^t Tr[Q mu_inf(s) Q^T] ds` with left-point
/// quadrature on the path grid. Negative integrands (rounding only, since
/// `mu_inf` is PSD) are clamped to zero so the output is non-decreasing.
///
/// The measure change is validated but does not enter: the long-term yield
/// is invariant under equivalent changes of measure.
pub fn ell_trajectory(
    params: &AdmissibleParams,
    vol: &VolatilitySpec,
    mc: &MeasureChange,
    t_grid: &[f64],
    states: &[SymMatrix],
    ell0: f64,
) -> Result<Vec<f64>> {
    Ok(long_term_profile(params, vol, mc, t_grid, states, ell0)?.ell)
}

/// The full asymptotic profile along a path.
pub fn long_term_profile(
    params: &AdmissibleParams,
    vol: &VolatilitySpec,
    mc: &MeasureChange,
    t_grid: &[f64],
    states: &[SymMatrix],
    ell0: f64,
) -> Result<AsymptoticProfile> {
    let d = params.dim();
    vol.sigma0.check_dim(d)?;
    mc.validate(d)?;
    if t_grid.len() != states.len() || t_grid.is_empty() {
        return Err(Error::Grid("path grid and states differ in length".into()));
    }
    let classification = classify_decay(vol, 0.0, &CLASSIFY_LADDER)?;
    if classification.class == DecayClass::Infinite {
        return Err(Error::Numerical(
            "volatility does not decay in maturity: the long-term drift is infinite and no finite long-term yield exists"
                .into(),
        ));
    }
    let mut mu_inf = Vec::with_capacity(states.len());
    let mut sigma_inf = Vec::with_capacity(states.len());
    for (&t, x) in t_grid.iter().zip(states) {
        let mu = mu_inf_at(vol, x, t, &DEFAULT_LADDER)?;
        if !mu.is_finite() {
            return Err(Error::Numerical(format!("long-term drift is not finite at t = {t}")));
        }
        mu_inf.push(mu);
        sigma_inf.push(match vol.kind {
            VolKind::ExponentialDecay { .. } | VolKind::InverseSqrt => SymMatrix::zeros(d),
            VolKind::Tabulated { .. } => {
                let shifted: Vec<f64> = DEFAULT_LADDER.iter().map(|m| m + t).collect();
                sigma_inf_numeric(vol, t, &shifted)?.value
            }
        });
    }
    let mut ell = Vec::with_capacity(states.len());
    let mut acc = ell0;
    ell.push(acc);
    for k in 1..t_grid.len() {
        let h = t_grid[k] - t_grid[k - 1];
        acc += 2.0 * drift_trace(&params.q, &mu_inf[k - 1]).max(0.0) * h;
        ell.push(acc);
    }
    Ok(AsymptoticProfile {
        t_grid: t_grid.to_vec(),
        sigma_inf,
        mu_inf,
        ell,
        classification,
    })
}

/// Per-entry bound `w_ij(s) >= sup_t |Sigma(s,t)_ij| / sqrt(t)`.
#[derive(Clone, Debug, Serialize)]
pub struct VolBound {
    pub s_grid: Vec<f64>,
    /// Empirical supremum over the `t` grid for each `s`.
    pub empirical: Vec<SymMatrix>,
    /// `(2 / beta) |sigma0|` or `2 |sigma0|`, when a closed form exists.
    pub closed_form: Option<SymMatrix>,
    pub dominated: bool,
}

pub fn verify_vol_bound(vol: &VolatilitySpec, s_grid: &[f64], t_grid: &[f64]) -> Result<VolBound> {
    let d = vol.dim();
    let abs = SymMatrix::from_upper(d, |i, j| vol.sigma0.get(i, j).abs());
    let closed_form = match vol.kind {
        VolKind::ExponentialDecay { beta } => Some(abs.scale(2.0 / beta)),
        VolKind::InverseSqrt => Some(abs.scale(2.0)),
        VolKind::Tabulated { .. } => None,
    };
    let mut empirical = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let mut sup: f64 = 0.0;
        for &t in t_grid.iter().filter(|&&t| t >= s && t > 0.0) {
            sup = sup.max(vol.big_g(t - s) / t.sqrt());
        }
        empirical.push(abs.scale(sup));
    }
    let dominated = match &closed_form {
        Some(w) => empirical
            .iter()
            .all(|e| (0..d).all(|i| (0..d).all(|j| e.get(i, j) <= w.get(i, j) * (1.0 + 1e-12)))),
        None => empirical.iter().all(|e| e.is_finite()),
    };
    Ok(VolBound {
        s_grid: s_grid.to_vec(),
        empirical,
        closed_form,
        dominated,
    })
}
