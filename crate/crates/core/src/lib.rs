//! Affine HJM term-structure models driven by affine processes on the cone
//! of positive semidefinite matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`symcone`]: dense symmetric matrices, the PSD cone, Jacobi eigensolver.
//! * [`params`]: admissible parameter sets and their validation.
//! * [`riccati`]: the generalised Riccati system and the Laplace transform.
//! * [`pathsim`]: Monte Carlo paths of the state process.
//! * [`hjm`]: volatility specifications, the drift condition, forward curves and yields.
//! * [`longterm`]: long-term yield asymptotics.
//! * [`mc`]: ensemble estimators.
//! * [`sampling`]: random draws of matrices and parameter sets for tests.
//! * [`acceptance`]: the acceptance suite.

pub mod acceptance;
pub mod error;
pub mod hjm;
pub mod longterm;
pub mod mc;
pub mod params;
pub mod pathsim;
pub mod riccati;
pub mod sampling;
pub mod symcone;

pub use error::{Error, Result};
pub use params::{
    validate, AdmissibleParams, GTerm, JumpIntegral, JumpPart, JumpRay, JumpRayFamily, LinearDriftMap,
    ParamsSpec, ValidationCheck, ValidationReport,
};
pub use symcone::{project_psd, psd_order_leq, sqrt_psd, trace_inner, Matrix, PsdMatrix, SymMatrix};
pub use riccati::{eval_f, eval_r, laplace_transform, solve as solve_riccati, RiccatiSolution};
pub use pathsim::{simulate, simulate_wishart_exact, uniform_grid, PathEnsemble, SamplePath, Scheme, Simulator};
pub use hjm::{
    big_sigma, bond_price, evolve_forward, hjm_drift, short_rate, yield_compact, yield_direct, CurveDriver,
    ForwardSurface, InitialCurve, MeasureChange, VolKind, VolatilitySpec, YieldDecomposition,
};
pub use longterm::{
    classify_decay, ell_trajectory, long_term_profile, mu_inf_closed, mu_inf_numeric, sigma_inf_numeric,
    verify_vol_bound, AsymptoticProfile, Classification, DecayClass,
};
pub use mc::{estimate_discounted_bond, estimate_laplace, two_sample_compare, EnsembleEstimate};
