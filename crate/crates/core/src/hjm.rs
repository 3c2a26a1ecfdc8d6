//! The HJM engine on the PSD cone: volatility specifications, the bond
//! volatility `Sigma`, the drift condition, forward-curve evolution along a
//! simulated path, bond prices, the short rate and yields.
//!
//! Forward rates follow `df(t,T) = alpha(t,T) dt + Tr[sigma(t,T) dX_t]` with
//! the drift `alpha` fixed by absence of arbitrage. All volatilities here
//! have the separable form `sigma(t,T) = g(T - t) sigma0`, so the bond
//! volatility is `Sigma(t,T) = -G(T - t) sigma0` with `G` the antiderivative
//! of `g`, and every stochastic integral reduces to a handful of scalars per
//! time step (see [`CurveDriver`]).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::AdmissibleParams;
use crate::pathsim::{grid_index, SamplePath};
use crate::symcone::{self, Matrix, SymMatrix, EPS_PSD};

/// The maturity profile `g` of a separable volatility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolKind {
    /// `g(tau) = e^{-beta tau}`
    ExponentialDecay { beta: f64 },
    /// `g(tau) = tau^{-1/2}`
    InverseSqrt,
    /// Piecewise-linear `g` through `(tau[i], g[i])`, flat outside the table.
    Tabulated { tau: Vec<f64>, g: Vec<f64> },
}

#[derive(Clone, Debug, Deserialize)]
struct VolatilitySpecRaw {
    #[serde(flatten)]
    kind: VolKind,
    sigma0: SymMatrix,
}

/// `sigma(t,T) = g(T - t) sigma0` for `T > t`, zero for `T < t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VolatilitySpecRaw")]
pub struct VolatilitySpec {
    #[serde(flatten)]
    pub kind: VolKind,
    pub sigma0: SymMatrix,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl TryFrom<VolatilitySpecRaw> for VolatilitySpec {
    type Error = Error;

    fn try_from(raw: VolatilitySpecRaw) -> Result<Self> {
        VolatilitySpec::new(raw.kind, raw.sigma0)
    }
}

impl VolatilitySpec {
    pub fn new(kind: VolKind, sigma0: SymMatrix) -> Result<Self> {
        let min_eig = sigma0.min_eigenvalue()?;
        if min_eig < -EPS_PSD {
            return Err(Error::InvalidParams(format!(
                "volatility scale sigma0 must be PSD (smallest eigenvalue {min_eig:e})"
            )));
        }
        let cumulative = match &kind {
            VolKind::ExponentialDecay { beta } => {
                if !(*beta > 0.0) || !beta.is_finite() {
                    return Err(Error::InvalidParams(format!("decay rate beta must be positive, got {beta}")));
                }
                Vec::new()
            }
            VolKind::InverseSqrt => Vec::new(),
            VolKind::Tabulated { tau, g } => tabulated_cumulative(tau, g)?,
        };
        Ok(Self {
            kind,
            sigma0,
            cumulative,
        })
    }

    pub fn exponential(beta: f64, sigma0: SymMatrix) -> Result<Self> {
        Self::new(VolKind::ExponentialDecay { beta }, sigma0)
    }

    pub fn inverse_sqrt(sigma0: SymMatrix) -> Result<Self> {
        Self::new(VolKind::InverseSqrt, sigma0)
    }

    pub fn tabulated(tau: Vec<f64>, g: Vec<f64>, sigma0: SymMatrix) -> Result<Self> {
        Self::new(VolKind::Tabulated { tau, g }, sigma0)
    }

    pub fn dim(&self) -> usize {
        self.sigma0.dim()
    }

    /// Whether `Sigma` has a closed form (otherwise it is integrated numerically).
    pub fn closed_sigma_available(&self) -> bool {
        !matches!(self.kind, VolKind::Tabulated { .. })
    }

    /// The scalar profile `g(tau)`; zero for `tau < 0` (and at `tau = 0`
    /// for the singular inverse-square-root profile).
    pub fn g(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        match &self.kind {
            VolKind::ExponentialDecay { beta } => (-beta * tau).exp(),
            VolKind::InverseSqrt => {
                if tau > 0.0 {
                    1.0 / tau.sqrt()
                } else {
                    0.0
                }
            }
            VolKind::Tabulated { tau: nodes, g } => interp_flat(nodes, g, tau),
        }
    }

    /// `G(tau) = int_0^tau g`; zero for `tau <= 0`.
    pub fn big_g(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            VolKind::ExponentialDecay { beta } => -(-beta * tau).exp_m1() / beta,
            VolKind::InverseSqrt => 2.0 * tau.sqrt(),
            VolKind::Tabulated { tau: nodes, g } => tabulated_integral(nodes, g, &self.cumulative, tau),
        }
    }

    /// `sigma(t,T)`.
    pub fn sigma(&self, t: f64, maturity: f64) -> SymMatrix {
        self.sigma0.scale(self.g(maturity - t))
    }

    pub fn is_zero(&self) -> bool {
        self.sigma0.max_abs() == 0.0
    }
}

fn tabulated_cumulative(tau: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if tau.is_empty() || tau.len() != g.len() {
        return Err(Error::InvalidParams(format!(
            "tabulated volatility needs matching non-empty tau and g columns ({} vs {})",
            tau.len(),
            g.len()
        )));
    }
    if tau[0] < 0.0 || tau.windows(2).any(|w| !(w[1] > w[0])) || tau.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("tabulated tau nodes must be finite, non-negative and increasing".into()));
    }
    if g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParams("tabulated g values must be finite and non-negative".into()));
    }
    let mut cum = Vec::with_capacity(tau.len());
    let mut acc = g[0] * tau[0];
    cum.push(acc);
    for i in 1..tau.len() {
        acc += simpson(tau[i - 1], tau[i], g[i - 1], g[i]);
        cum.push(acc);
    }
    Ok(cum)
}

/// Simpson's rule on one linear segment, which is exact there.
fn simpson(a: f64, b: f64, ga: f64, gb: f64) -> f64 {
    (b - a) / 6.0 * (ga + 4.0 * 0.5 * (ga + gb) + gb)
}

fn interp_flat(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    let k = x.partition_point(|&v| v <= at);
    if k >= x.len() {
        return y[y.len() - 1];
    }
    let w = (at - x[k - 1]) / (x[k] - x[k - 1]);
    (1.0 - w) * y[k - 1] + w * y[k]
}

fn tabulated_integral(nodes: &[f64], g: &[f64], cum: &[f64], tau: f64) -> f64 {
    if tau <= nodes[0] {
        return g[0] * tau;
    }
    let k = nodes.partition_point(|&v| v <= tau) - 1;
    let gk = interp_flat(nodes, g, tau);
    cum[k] + simpson(nodes[k], tau, g[k], gk)
}

/// `Sigma(s,T) = -int_s^T sigma(s,u) du`.
pub fn big_sigma(vol: &VolatilitySpec, s: f64, maturity: f64) -> Result<SymMatrix> {
    if s > maturity {
        return Err(Error::Domain(format!("Sigma(s,T) needs s <= T, got s = {s}, T = {maturity}")));
    }
    Ok(vol.sigma0.scale(-vol.big_g(maturity - s)))
}

/// The initial forward curve `T -> f(0,T)`: piecewise linear through the
/// nodes, flat outside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InitialCurveRaw", into = "InitialCurveRaw")]
pub struct InitialCurve {
    nodes: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum InitialCurveRaw {
    Flat { flat: f64 },
    Nodes { nodes: Vec<(f64, f64)> },
}

impl TryFrom<InitialCurveRaw> for InitialCurve {
    type Error = Error;

    fn try_from(raw: InitialCurveRaw) -> Result<Self> {
        match raw {
            InitialCurveRaw::Flat { flat } => InitialCurve::flat(flat),
            InitialCurveRaw::Nodes { nodes } => InitialCurve::from_nodes(nodes),
        }
    }
}

impl From<InitialCurve> for InitialCurveRaw {
    fn from(c: InitialCurve) -> Self {
        if c.nodes.len() == 1 {
            InitialCurveRaw::Flat { flat: c.nodes[0].1 }
        } else {
            InitialCurveRaw::Nodes { nodes: c.nodes }
        }
    }
}

impl InitialCurve {
    pub fn flat(rate: f64) -> Result<Self> {
        Self::from_nodes(vec![(0.0, rate)])
    }

    pub fn from_nodes(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParams("initial curve needs at least one node".into()));
        }
        if nodes.iter().any(|(t, r)| !t.is_finite() || !r.is_finite()) {
            return Err(Error::InvalidParams("initial curve nodes must be finite".into()));
        }
        if nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidParams("initial curve maturities must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn is_flat(&self) -> bool {
        self.nodes.len() == 1
    }

    /// `f(0,T)`.
    pub fn forward(&self, maturity: f64) -> f64 {
        let n = &self.nodes;
        if maturity <= n[0].0 {
            return n[0].1;
        }
        let k = n.partition_point(|p| p.0 <= maturity);
        if k >= n.len() {
            return n[n.len() - 1].1;
        }
        let w = (maturity - n[k - 1].0) / (n[k].0 - n[k - 1].0);
        (1.0 - w) * n[k - 1].1 + w * n[k].1
    }

    /// `int_a^b f(0,u) du`, exact for the piecewise-linear curve.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut cuts = vec![a];
        cuts.extend(self.nodes.iter().map(|p| p.0).filter(|&t| t > a && t < b));
        cuts.push(b);
        cuts.windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.forward(w[0]) + self.forward(w[1])))
            .sum()
    }

    /// `Y(0;t,T) = int_t^T f(0,u) du / (T - t)`, the forward yield seen at time 0.
    pub fn forward_yield(&self, t: f64, maturity: f64) -> f64 {
        if maturity == t {
            return self.forward(t);
        }
        self.integral(t, maturity) / (maturity - t)
    }

    /// The long-term level `lim Y(0,T)`: exact for a flat curve, otherwise
    /// the average rate up to the last node, returned with a warning.
    pub fn long_term_level(&self) -> (f64, Option<String>) {
        if self.is_flat() {
            return (self.nodes[0].1, None);
        }
        let last = self.nodes[self.nodes.len() - 1].0;
        if last <= 0.0 {
            return (self.nodes[self.nodes.len() - 1].1, Some("initial curve has no positive maturity".into()));
        }
        (
            self.forward_yield(0.0, last),
            Some(format!(
                "long-term level taken as the average forward rate up to the last node T = {last}; \
                 a finite table does not determine the limit"
            )),
        )
    }
}

/// Constant market price of risk `gamma` and per-ray jump density multipliers `K`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureChange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Matrix>,
    /// One multiplier per jump ray; missing entries default to 1.
    #[serde(rename = "K", default, skip_serializing_if = "Vec::is_empty")]
    pub k: Vec<f64>,
}

impl MeasureChange {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn k(&self, ray: usize) -> f64 {
        self.k.get(ray).copied().unwrap_or(1.0)
    }

    pub fn gamma(&self, dim: usize) -> Matrix {
        self.gamma.clone().unwrap_or_else(|| Matrix::zeros(dim))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(g) = &self.gamma {
            g.check_dim(dim)?;
            if !g.is_finite() {
                return Err(Error::InvalidParams("market price of risk must be finite".into()));
            }
        }
        if let Some(k) = self.k.iter().find(|k| !(**k >= 0.0) || !k.is_finite()) {
            return Err(Error::InvalidParams(format!("jump multipliers K must be finite and >= 0, got {k}")));
        }
        Ok(())
    }
}

/// The drift `alpha(t,T)` imposed by the absence of arbitrage in state `x`.
pub fn hjm_drift(
    params: &AdmissibleParams,
    vol: &VolatilitySpec,
    mc: &MeasureChange,
    x: &SymMatrix,
    t: f64,
    maturity: f64,
) -> Result<f64> {
    let d = params.dim();
    x.check_dim(d)?;
    vol.sigma0.check_dim(d)?;
    mc.validate(d)?;
    if t > maturity {
        return Err(Error::Domain(format!("drift needs t <= T, got t = {t}, T = {maturity}")));
    }
    let sigma = vol.sigma(t, maturity);
    let big = big_sigma(vol, t, maturity)?;
    let root = symcone::sqrt_psd(&symcone::project_psd(x)?)?;
    let gq = root.as_matrix() * &(&mc.gamma(d) * &params.q);
    let inner = &params.drift_at(x).into_matrix() + &gq.scale(2.0);
    let mut alpha = -sigma.trace_product(&inner);
    let q = &params.q;
    let sxs = &(sigma.as_matrix() * x.as_matrix()) * big.as_matrix();
    alpha -= 4.0 * (&(q * &sxs) * &q.transpose()).trace();
    for (r, ray) in params.jumps.rays.iter().enumerate() {
        let a = ray.weight(&sigma);
        let c = ray.weight(&big);
        alpha -= mc.k(r) * ray.intensity(x) * a * ray.theta / (ray.theta - c).powi(2);
    }
    Ok(alpha)
}

/// Constants of one jump ray seen through `sigma0`.
#[derive(Clone, Copy, Debug)]
struct RayFactor {
    w: f64,
    theta: f64,
    k: f64,
}

/// Per-step scalars of a path that determine every forward rate.
///
/// For step `k` starting at `s_k` with length `h_k`:
/// `quad = Tr[Q sigma0 X sigma0 Q^T]`, `dw = Tr[sigma0 sqrt(X) dW Q]`,
/// `tr_gamma = Tr[sigma0 sqrt(X) gamma Q]`, and per ray the frozen intensity
/// and the sum of jump sizes inside the step.
#[derive(Clone, Debug)]
pub struct CurveDriver {
    t_grid: Arc<[f64]>,
    quad: Vec<f64>,
    dw: Vec<f64>,
    tr_gamma: Vec<f64>,
    /// `[lambda, jump size sum]` per ray, `2 * n_rays` entries per step.
    ray_data: Vec<f64>,
    rays: Vec<RayFactor>,
    vol: VolatilitySpec,
    curve: InitialCurve,
}

/// The terms of the compact yield formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct YieldDecomposition {
    /// `Y(0;t,T)`
    pub initial: f64,
    /// `2 int Tr[Q (Gamma(s,T) - Gamma(s,t)) Q^T] ds / (T - t)`
    pub quadratic: f64,
    /// Compensator contribution of the jumps.
    pub jump_compensator: f64,
    /// Realised jumps.
    pub jump_sum: f64,
    /// `2 int Tr[(Sigma(s,T) - Sigma(s,t)) sqrt(X) dW* Q] / (T - t)` with sign convention of the yield.
    pub brownian: f64,
    /// Realised jumps minus their compensator under the pricing measure.
    pub compensated_jump_martingale: f64,
    /// Expected value part `sum K lambda E[M] ds`.
    pub compensated_jump_drift: f64,
    pub total: f64,
}

impl YieldDecomposition {
    /// The jump contribution through the compensated decomposition.
    pub fn compensated_jump_total(&self) -> f64 {
        self.compensated_jump_martingale + self.compensated_jump_drift
    }
}

impl CurveDriver {
    pub fn new(
        params: &AdmissibleParams,
        vol: &VolatilitySpec,
        mc: &MeasureChange,
        curve: &InitialCurve,
        path: &SamplePath,
    ) -> Result<Self> {
        let d = params.dim();
        vol.sigma0.check_dim(d)?;
        mc.validate(d)?;
        let (roots, increments) = match (&path.roots, &path.increments) {
            (Some(r), Some(i)) => (r, i),
            _ => {
                return Err(Error::Unsupported(
                    "forward curves need the Brownian increments of an Euler path".into(),
                ))
            }
        };
        let n = path.n_steps();
        let s0 = vol.sigma0.as_matrix();
        let q = &params.q;
        let qs = q * s0;
        let gq = &mc.gamma(d) * q;
        let rays: Vec<RayFactor> = params
            .jumps
            .rays
            .iter()
            .enumerate()
            .map(|(r, ray)| RayFactor {
                w: ray.weight(&vol.sigma0),
                theta: ray.theta,
                k: mc.k(r),
            })
            .collect();
        let mut quad = Vec::with_capacity(n);
        let mut dw = Vec::with_capacity(n);
        let mut tr_gamma = Vec::with_capacity(n);
        let mut ray_data = vec![0.0; 2 * rays.len() * n];
        for k in 0..n {
            let x = &path.states[k];
            quad.push((&(&qs * x.as_matrix()) * &qs.transpose()).trace());
            let sr = s0 * roots[k].as_matrix();
            dw.push(sr.trace_product(&(&increments[k] * q)));
            tr_gamma.push(sr.trace_product(&gq));
            for (r, ray) in params.jumps.rays.iter().enumerate() {
                ray_data[2 * (k * rays.len() + r)] = ray.intensity(x);
            }
        }
        for j in &path.jumps {
            ray_data[2 * (j.step * rays.len() + j.ray) + 1] += j.size;
        }
        Ok(Self {
            t_grid: path.t_grid.clone(),
            quad,
            dw,
            tr_gamma,
            ray_data,
            rays,
            vol: vol.clone(),
            curve: curve.clone(),
        })
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn vol(&self) -> &VolatilitySpec {
        &self.vol
    }

    pub fn curve(&self) -> &InitialCurve {
        &self.curve
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        grid_index(&self.t_grid, t)
    }

    fn ray(&self, k: usize, r: usize) -> (f64, f64) {
        let i = 2 * (k * self.rays.len() + r);
        (self.ray_data[i], self.ray_data[i + 1])
    }

    fn step(&self, k: usize) -> (f64, f64) {
        (self.t_grid[k], self.t_grid[k + 1] - self.t_grid[k])
    }

    /// `f(t,T)` for `t = t_grid[t_index]` and `T >= t`.
    pub fn forward(&self, t_index: usize, maturity: f64) -> f64 {
        let mut f = self.curve.forward(maturity);
        for k in 0..t_index {
            let (s, h) = self.step(k);
            let tau = maturity - s;
            let g = self.vol.g(tau);
            if g == 0.0 {
                continue;
            }
            let big = self.vol.big_g(tau);
            let mut drift = -2.0 * g * self.tr_gamma[k] + 4.0 * g * big * self.quad[k];
            let mut jumps = 0.0;
            for (r, ray) in self.rays.iter().enumerate() {
                let (lambda, size_sum) = self.ray(k, r);
                let denom = ray.theta + big * ray.w;
                drift -= ray.k * lambda * g * ray.w * ray.theta / (denom * denom);
                jumps += g * ray.w * size_sum;
            }
            f += drift * h + 2.0 * g * self.dw[k] + jumps;
        }
        f
    }

    /// `int_t^T f(t,u) du` integrated exactly in `u` (with the time
    /// discretisation of the path), split into the compact-form terms.
    pub fn yield_terms(&self, t_index: usize, maturity: f64) -> Result<YieldDecomposition> {
        let t = self.t_grid[t_index];
        if !(maturity > t) {
            return Err(Error::Domain(format!("yield needs T > t, got t = {t}, T = {maturity}")));
        }
        let span = maturity - t;
        let mut out = YieldDecomposition {
            initial: self.curve.forward_yield(t, maturity),
            ..Default::default()
        };
        for k in 0..t_index {
            let (s, h) = self.step(k);
            let g_t = self.vol.big_g(t - s);
            let g_big = self.vol.big_g(maturity - s);
            let dg = g_big - g_t;
            out.quadratic += 2.0 * (g_big * g_big - g_t * g_t) * self.quad[k] * h;
            out.brownian += 2.0 * dg * (self.dw[k] - self.tr_gamma[k] * h);
            for (r, ray) in self.rays.iter().enumerate() {
                let (lambda, size_sum) = self.ray(k, r);
                let e_big = ray.theta / (ray.theta + g_big * ray.w);
                let e_t = ray.theta / (ray.theta + g_t * ray.w);
                out.jump_compensator += ray.k * lambda * (e_big - e_t) * h;
                out.jump_sum += size_sum * ray.w * dg;
                let realised = size_sum * ray.w * dg;
                let compensator = ray.k * lambda * h * ray.w * dg / ray.theta;
                out.compensated_jump_martingale += realised - compensator;
                out.compensated_jump_drift += ray.k * lambda * h * (e_big - e_t + ray.w * dg / ray.theta);
            }
        }
        for v in [
            &mut out.quadratic,
            &mut out.brownian,
            &mut out.jump_compensator,
            &mut out.jump_sum,
            &mut out.compensated_jump_martingale,
            &mut out.compensated_jump_drift,
        ] {
            *v /= span;
        }
        out.total = out.initial + out.quadratic + out.jump_compensator + out.jump_sum + out.brownian;
        Ok(out)
    }

    /// `P(t,T) = exp(-int_t^T f(t,u) du)` with the maturity integral exact.
    pub fn bond_price(&self, t_index: usize, maturity: f64) -> Result<f64> {
        let t = self.t_grid[t_index];
        if maturity == t {
            return Ok(1.0);
        }
        Ok((-(maturity - t) * self.yield_terms(t_index, maturity)?.total).exp())
    }

    /// `P(t,T) / beta_t`, where the bank account integrates the short rate
    /// with the same discretisation as the forward curve, in closed form.
    pub fn discounted_bond(&self, t_index: usize, maturity: f64) -> Result<f64> {
        let t = self.t_grid[t_index];
        if maturity < t {
            return Err(Error::Domain(format!("discounted bond needs T >= t, got t = {t}, T = {maturity}")));
        }
        let mut log = -self.curve.integral(0.0, maturity);
        for k in 0..t_index {
            let (s, h) = self.step(k);
            let big = self.vol.big_g(maturity - s);
            log -= 2.0 * big * (self.dw[k] - self.tr_gamma[k] * h) + 2.0 * big * big * self.quad[k] * h;
            for (r, ray) in self.rays.iter().enumerate() {
                let (lambda, size_sum) = self.ray(k, r);
                log -= big * ray.w * size_sum;
                log += ray.k * lambda * h * (1.0 - ray.theta / (ray.theta + big * ray.w));
            }
        }
        Ok(log.exp())
    }

    /// `4 int_0^t Tr[Q Sigma(s,T) X_s Sigma(s,T) Q^T] ds`, the quadratic
    /// variation of `log P(., T)` on `[0, t]`.
    pub fn log_bond_quadratic_variation(&self, t_index: usize, maturity: f64) -> f64 {
        (0..t_index)
            .map(|k| {
                let (s, h) = self.step(k);
                let big = self.vol.big_g(maturity - s);
                4.0 * big * big * self.quad[k] * h
            })
            .sum()
    }

    /// `int_0^t Tr[Q sigma0 X_s sigma0 Q^T] ds`, left-point.
    pub fn integrated_quad(&self, t_index: usize) -> f64 {
        (0..t_index).map(|k| self.quad[k] * self.step(k).1).sum()
    }
}

/// Forward rates `f(t,T)` of one path on a set of observation times and a
/// common maturity grid; entries with `T < t` are `NaN`.
#[derive(Clone, Debug)]
pub struct ForwardSurface {
    pub t_grid: Vec<f64>,
    pub maturities: Vec<f64>,
    pub f_values: Vec<Vec<f64>>,
    t_index: Vec<usize>,
    driver: Arc<CurveDriver>,
}

/// Builds the forward surface of `path` at observation times `t_obs` (path
/// grid nodes) for the maturity grid `maturities`.
pub fn evolve_forward(
    params: &AdmissibleParams,
    vol: &VolatilitySpec,
    mc: &MeasureChange,
    curve: &InitialCurve,
    path: &SamplePath,
    t_obs: &[f64],
    maturities: &[f64],
) -> Result<ForwardSurface> {
    let driver = CurveDriver::new(params, vol, mc, curve, path)?;
    ForwardSurface::from_driver(Arc::new(driver), t_obs, maturities)
}

impl ForwardSurface {
    pub fn from_driver(driver: Arc<CurveDriver>, t_obs: &[f64], maturities: &[f64]) -> Result<Self> {
        if maturities.is_empty() || maturities.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("maturity grid must be non-empty and strictly increasing".into()));
        }
        let t_index = t_obs.iter().map(|&t| driver.index_of(t)).collect::<Result<Vec<_>>>()?;
        let f_values = t_index
            .iter()
            .map(|&i| {
                let t = driver.t_grid[i];
                maturities
                    .iter()
                    .map(|&m| if m >= t - 1e-12 { driver.forward(i, m.max(t)) } else { f64::NAN })
                    .collect()
            })
            .collect();
        Ok(Self {
            t_grid: t_obs.to_vec(),
            maturities: maturities.to_vec(),
            f_values,
            t_index,
            driver,
        })
    }

    pub fn driver(&self) -> &CurveDriver {
        &self.driver
    }

    fn row(&self, t: f64) -> Result<usize> {
        grid_index(&self.t_grid, t)
    }

    fn col(&self, maturity: f64) -> Result<usize> {
        grid_index(&self.maturities, maturity)
            .map_err(|_| Error::Grid(format!("T = {maturity} is not on the maturity grid")))
    }

    /// `f(t,T)` at grid nodes.
    pub fn forward(&self, t: f64, maturity: f64) -> Result<f64> {
        let v = self.f_values[self.row(t)?][self.col(maturity)?];
        if v.is_nan() {
            return Err(Error::Domain(format!("f(t,T) needs T >= t, got t = {t}, T = {maturity}")));
        }
        Ok(v)
    }

    /// `int_t^T f(t,u) du`: trapezoidal on the maturity grid, except for the
    /// first cell which is integrated exactly (the inverse-square-root
    /// profile is singular on the diagonal).
    pub fn integrated_forward(&self, t: f64, maturity: f64) -> Result<f64> {
        let i = self.row(t)?;
        let j0 = self.col(t)?;
        let j1 = self.col(maturity)?;
        if j1 < j0 {
            return Err(Error::Domain(format!("bond price needs t <= T, got t = {t}, T = {maturity}")));
        }
        if j1 == j0 {
            return Ok(0.0);
        }
        let row = &self.f_values[i];
        let first = self.maturities[j0 + 1];
        let mut acc = (first - t) * self.driver.yield_terms(self.t_index[i], first)?.total;
        for j in (j0 + 1)..j1 {
            acc += 0.5 * (self.maturities[j + 1] - self.maturities[j]) * (row[j] + row[j + 1]);
        }
        Ok(acc)
    }
}

/// `P(t,T)`; exactly 1 when `T = t`.
pub fn bond_price(surface: &ForwardSurface, t: f64, maturity: f64) -> Result<f64> {
    Ok((-surface.integrated_forward(t, maturity)?).exp())
}

/// `r_t = f(t,t)`.
pub fn short_rate(surface: &ForwardSurface, t: f64) -> Result<f64> {
    surface.forward(t, t)
}

/// `Y(t,T) = -log P(t,T) / (T - t)` from the surface.
pub fn yield_direct(surface: &ForwardSurface, t: f64, maturity: f64) -> Result<f64> {
    if !(maturity > t) {
        return Err(Error::Domain(format!("yield needs T > t (use the short rate at T = t), got t = {t}, T = {maturity}")));
    }
    Ok(surface.integrated_forward(t, maturity)? / (maturity - t))
}

/// `Y(t,T)` assembled from the compact formula, with its terms.
pub fn yield_compact(driver: &CurveDriver, t: f64, maturity: f64) -> Result<YieldDecomposition> {
    driver.yield_terms(driver.index_of(t)?, maturity)
}
