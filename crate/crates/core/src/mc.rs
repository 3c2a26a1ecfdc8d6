//! Ensemble estimators: sample means with standard errors, the Laplace
//! functional, discounted bond prices and two-sample comparisons.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjm::{CurveDriver, InitialCurve, MeasureChange, VolatilitySpec};
use crate::pathsim::{PathEnsemble, SamplePath};
use crate::symcone::SymMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub ci95: (f64, f64),
}

/// Pairwise summation in a fixed order, so results do not depend on how
/// the samples were produced.
fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

impl EnsembleEstimate {
    /// Sample mean and its standard error `s / sqrt(n)`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if samples.iter().all(|&v| v == samples[0]) {
            return Ok(Self::exact(samples[0], n));
        }
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        let se = (var / n as f64).sqrt();
        Ok(Self {
            value: mean,
            std_error: se,
            n,
            ci95: (mean - 1.96 * se, mean + 1.96 * se),
        })
    }

    fn exact(value: f64, n: usize) -> Self {
        Self {
            value,
            std_error: 0.0,
            n,
            ci95: (value, value),
        }
    }

    /// `|value - target|` in standard errors (infinite if the SE is zero and
    /// the values differ).
    pub fn z_against(&self, target: f64) -> f64 {
        z_score(self.value - target, self.std_error)
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// `(a - b) / sqrt(se_a^2 + se_b^2)`.
pub fn two_sample_compare(a: &EnsembleEstimate, b: &EnsembleEstimate) -> Result<f64> {
    if a.n == 0 || b.n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    Ok(z_score(a.value - b.value, a.std_error.hypot(b.std_error)))
}

/// `e^{-Tr[u X_t]}` on one path.
pub fn laplace_sample(path: &SamplePath, u: &SymMatrix, t: f64) -> Result<f64> {
    Ok((-u.trace_product(path.state_at(t)?)).exp())
}

/// Monte Carlo estimate of `E[e^{-Tr[u X_t]}]`.
pub fn estimate_laplace(ensemble: &PathEnsemble, u: &SymMatrix, t: f64) -> Result<EnsembleEstimate> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    u.check_dim(ensemble.params.dim())?;
    let k = ensemble.index_of(t)?;
    let samples: Vec<f64> = ensemble.paths.iter().map(|p| (-u.trace_product(&p.states[k])).exp()).collect();
    EnsembleEstimate::from_samples(&samples)
}

/// Monte Carlo estimate of `E[P(t,T) / beta_t]`, which equals `P(0,T)` when
/// the drift condition holds.
pub fn estimate_discounted_bond(
    vol: &VolatilitySpec,
    mc: &MeasureChange,
    curve: &InitialCurve,
    ensemble: &PathEnsemble,
    t: f64,
    maturity: f64,
) -> Result<EnsembleEstimate> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let k = ensemble.index_of(t)?;
    let samples = ensemble
        .paths
        .iter()
        .map(|p| CurveDriver::new(&ensemble.params, vol, mc, curve, p)?.discounted_bond(k, maturity))
        .collect::<Result<Vec<_>>>()?;
    EnsembleEstimate::from_samples(&samples)
}
