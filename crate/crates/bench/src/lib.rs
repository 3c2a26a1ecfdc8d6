//! Fixtures shared by the benchmarks: fixed-seed inputs so that runs are
//! comparable across revisions.

use affine_hjm::acceptance::{example_params, example_x0, exponential_example_vol, example_curve};
use affine_hjm::pathsim::path_rng;
use affine_hjm::sampling::random_psd;
use affine_hjm::{AdmissibleParams, InitialCurve, PsdMatrix, Scheme, SymMatrix, VolatilitySpec};

/// `n` random PSD matrices of dimension `dim`, reproducible from `seed`.
pub fn psd_inputs(dim: usize, n: usize, seed: u64) -> Vec<SymMatrix> {
    let mut rng = path_rng(seed, dim as u64, Scheme::EulerProject);
    (0..n).map(|_| random_psd(&mut rng, dim, 1.0).into_sym()).collect()
}

/// The two-dimensional Wishart example with its volatility and flat curve.
pub struct Example {
    pub params: AdmissibleParams,
    pub x0: PsdMatrix,
    pub vol: VolatilitySpec,
    pub curve: InitialCurve,
}

impl Example {
    pub fn new() -> Self {
        Self {
            params: example_params(),
            x0: example_x0(),
            vol: exponential_example_vol(),
            curve: example_curve(),
        }
    }
}

impl Default for Example {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_reproducible_and_psd() {
        let a = psd_inputs(3, 4, 11);
        assert_eq!(a, psd_inputs(3, 4, 11));
        assert!(a.iter().all(|m| m.min_eigenvalue().unwrap() >= -1e-12));
    }
}
