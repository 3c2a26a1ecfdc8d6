//! Admissible parameter sets `(alpha, b, B, m, mu)` for conservative affine
//! processes on the PSD cone.
//!
//! The linear drift is `B(z) = M z + z M^T + sum_k Tr[L_k z] P_k`, and jumps
//! come from a finite family of rank-one rays: a ray with direction `v`
//! produces jumps `xi = g v v^T` with `g ~ Exp(theta)`, at intensity
//! `lambda_const + Tr[X L_state]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling;
use crate::symcone::{self, Matrix, PsdMatrix, SymMatrix, EPS_PSD};

/// Number of orthogonal rank-one pairs used to probe the drift cone condition.
pub const CONE_CHECK_PAIRS: usize = 2000;
const CONE_CHECK_SEED: u64 = 0x00c0_4e5e_ed00;
const Q_TOL: f64 = 1e-10;
const UNIT_TOL: f64 = 1e-12;

/// One term `z -> Tr[L z] P` of the cone-preserving part of the drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GTerm {
    #[serde(rename = "P")]
    pub p: SymMatrix,
    #[serde(rename = "L")]
    pub l: SymMatrix,
}

/// `B(z) = M z + z M^T + G(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearDriftMap {
    pub m: Matrix,
    pub g_terms: Vec<GTerm>,
}

impl LinearDriftMap {
    pub fn new(m: Matrix) -> Self {
        Self {
            m,
            g_terms: Vec::new(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(Matrix::zeros(dim))
    }

    pub fn with_g_terms(m: Matrix, g_terms: Vec<GTerm>) -> Self {
        Self { m, g_terms }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    /// `B(z)`.
    pub fn apply(&self, z: &SymMatrix) -> Result<SymMatrix> {
        z.check_dim(self.dim())?;
        Ok(self.apply_unchecked(z))
    }

    pub(crate) fn apply_unchecked(&self, z: &SymMatrix) -> SymMatrix {
        let mz = &self.m * z.as_matrix();
        let mut out = SymMatrix::from_upper(z.dim(), |i, j| mz.get(i, j) + mz.get(j, i));
        for term in &self.g_terms {
            let w = term.l.trace_product(z);
            if w != 0.0 {
                out = &out + &term.p.scale(w);
            }
        }
        out
    }

    /// The adjoint `B^T(u) = M^T u + u M + sum_k Tr[P_k u] L_k`, defined by
    /// `Tr[B^T(u) y] = Tr[B(y) u]`.
    pub fn adjoint(&self, u: &SymMatrix) -> Result<SymMatrix> {
        u.check_dim(self.dim())?;
        Ok(self.adjoint_unchecked(u))
    }

    pub(crate) fn adjoint_unchecked(&self, u: &SymMatrix) -> SymMatrix {
        let um = u.as_matrix() * &self.m;
        let mut out = SymMatrix::from_upper(u.dim(), |i, j| um.get(i, j) + um.get(j, i));
        for term in &self.g_terms {
            let w = term.p.trace_product(u);
            if w != 0.0 {
                out = &out + &term.l.scale(w);
            }
        }
        out
    }
}

/// Jumps along a fixed rank-one direction with exponentially distributed size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRay {
    pub v: Vec<f64>,
    pub theta: f64,
    pub lambda_const: f64,
    #[serde(rename = "L_state")]
    pub l_state: SymMatrix,
}

impl JumpRay {
    pub fn new(v: Vec<f64>, theta: f64, lambda_const: f64, l_state: SymMatrix) -> Self {
        Self {
            v,
            theta,
            lambda_const,
            l_state,
        }
    }

    /// Total jump intensity `lambda_const + Tr[x L_state]` in state `x`.
    pub fn intensity(&self, x: &SymMatrix) -> f64 {
        (self.lambda_const + self.l_state.trace_product(x)).max(0.0)
    }

    /// The jump `size * v v^T`.
    pub fn jump(&self, size: f64) -> SymMatrix {
        SymMatrix::outer(&self.v).scale(size)
    }

    /// `v^T a v`, the pairing `Tr[a xi] / size` of a jump with `a`.
    pub fn weight(&self, a: &SymMatrix) -> f64 {
        a.quadratic_form(&self.v)
    }

    /// `E[e^{-size q}] - 1 = -q / (theta + q)` for `size ~ Exp(theta)`.
    pub fn laplace_increment(&self, q: f64) -> f64 {
        -q / (self.theta + q)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JumpRayFamily {
    pub rays: Vec<JumpRay>,
}

/// Which of the two Riccati jump integrals to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpPart {
    /// `int (e^{-Tr[u xi]} - 1) m(dxi)`
    Constant,
    /// `int (e^{-Tr[u xi]} - 1) mu(dxi)`, as a symmetric matrix
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JumpIntegral {
    Constant(f64),
    Linear(SymMatrix),
}

impl JumpRayFamily {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(rays: Vec<JumpRay>) -> Self {
        Self { rays }
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    /// Closed-form Riccati jump integrals; `u` must be PSD.
    pub fn exp_integral(&self, u: &SymMatrix, which: JumpPart) -> Result<JumpIntegral> {
        let min_eig = u.min_eigenvalue()?;
        if min_eig < -EPS_PSD {
            return Err(Error::Domain(format!(
                "jump Laplace integral needs a PSD argument (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(match which {
            JumpPart::Constant => JumpIntegral::Constant(self.constant_integral(u)),
            JumpPart::Linear => JumpIntegral::Linear(self.linear_integral(u, u.dim())),
        })
    }

    pub(crate) fn constant_integral(&self, u: &SymMatrix) -> f64 {
        self.rays
            .iter()
            .map(|r| r.lambda_const * r.laplace_increment(r.weight(u)))
            .sum()
    }

    pub(crate) fn linear_integral(&self, u: &SymMatrix, dim: usize) -> SymMatrix {
        let mut out = SymMatrix::zeros(dim);
        for r in &self.rays {
            let c = r.laplace_increment(r.weight(u));
            if c != 0.0 {
                out = &out + &r.l_state.scale(c);
            }
        }
        out
    }
}

/// The parameters of a conservative affine process on the PSD cone, plus a
/// factor `Q` with `Q^T Q = alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleParams {
    pub alpha: SymMatrix,
    pub b: SymMatrix,
    pub drift: LinearDriftMap,
    pub jumps: JumpRayFamily,
    pub q: Matrix,
}

impl AdmissibleParams {
    /// Assembles a parameter set; `Q` defaults to the symmetric square root
    /// of `alpha`. Only dimensions are checked here, see [`validate`].
    pub fn new(
        alpha: SymMatrix,
        b: SymMatrix,
        drift: LinearDriftMap,
        jumps: JumpRayFamily,
        q: Option<Matrix>,
    ) -> Result<Self> {
        let d = alpha.dim();
        b.check_dim(d)?;
        drift.m.check_dim(d)?;
        for g in &drift.g_terms {
            g.p.check_dim(d)?;
            g.l.check_dim(d)?;
        }
        for ray in &jumps.rays {
            ray.l_state.check_dim(d)?;
            if ray.v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: ray.v.len(),
                });
            }
        }
        let q = match q {
            Some(q) => {
                q.check_dim(d)?;
                q
            }
            None => {
                let root = symcone::sqrt_psd(&symcone::project_psd(&alpha)?)?;
                root.into_sym().into_matrix()
            }
        };
        Ok(Self {
            alpha,
            b,
            drift,
            jumps,
            q,
        })
    }

    /// Wishart parameters: `alpha = Q^T Q`, `b = delta alpha`, `B(z) = M z + z M^T`, no jumps.
    pub fn wishart(delta: f64, m: Matrix, q: Matrix) -> Result<Self> {
        let alpha = SymMatrix::symmetrize(&(&q.transpose() * &q));
        let b = alpha.scale(delta);
        Self::new(alpha, b, LinearDriftMap::new(m), JumpRayFamily::none(), Some(q))
    }

    /// `dX = a I dt + sqrt(X) dW + dW^T sqrt(X)`.
    pub fn scaled_identity_wishart(dim: usize, a: f64) -> Self {
        Self::wishart(a, Matrix::zeros(dim), Matrix::identity(dim)).expect("consistent dimensions")
    }

    pub fn dim(&self) -> usize {
        self.alpha.dim()
    }

    /// `b + B(x)`.
    pub fn drift_at(&self, x: &SymMatrix) -> SymMatrix {
        &self.b + &self.drift.apply_unchecked(x)
    }

    /// Returns `Some(delta)` when `b = delta alpha` with no `G` part and no jumps.
    pub fn wishart_index(&self) -> Option<f64> {
        if !self.jumps.is_empty() || !self.drift.g_terms.is_empty() {
            return None;
        }
        let ta = self.alpha.trace();
        if ta <= 0.0 {
            return (self.b.frobenius_norm() == 0.0).then_some(0.0);
        }
        let delta = self.b.trace() / ta;
        let gap = (&self.b - &self.alpha.scale(delta)).frobenius_norm();
        (gap <= 1e-10 * (1.0 + self.b.frobenius_norm())).then_some(delta)
    }
}

/// One admissibility condition with the quantity that decided it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub witness: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let msg = self
            .failures()
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::InvalidParams(msg))
    }
}

fn min_eig_or_nan(m: &SymMatrix) -> f64 {
    m.min_eigenvalue().unwrap_or(f64::NAN)
}

fn push(checks: &mut Vec<ValidationCheck>, name: &'static str, passed: bool, witness: f64, detail: String) {
    checks.push(ValidationCheck {
        name,
        passed,
        witness,
        detail,
    });
}

/// Checks every admissibility condition and reports the witnesses. Never fails.
pub fn validate(params: &AdmissibleParams) -> ValidationReport {
    let d = params.dim();
    let mut checks = Vec::new();

    push(&mut checks, "dimension", d >= 2, d as f64, format!("d = {d} (need d >= 2)"));

    let w = min_eig_or_nan(&params.alpha);
    push(&mut checks, "alpha_psd", w >= -EPS_PSD, w, format!("min eig(alpha) = {w:e}"));

    let w = min_eig_or_nan(&params.b);
    push(&mut checks, "b_psd", w >= -EPS_PSD, w, format!("min eig(b) = {w:e}"));

    let gap = &params.b - &params.alpha.scale(d.saturating_sub(1) as f64);
    let w = min_eig_or_nan(&gap);
    push(
        &mut checks,
        "b_dominates_alpha",
        w >= -EPS_PSD,
        w,
        format!("min eig(b - (d-1) alpha) = {w:e}"),
    );

    let qtq = &params.q.transpose() * &params.q;
    let w = (&qtq - params.alpha.as_matrix()).frobenius_norm();
    push(&mut checks, "q_factorises_alpha", w <= Q_TOL, w, format!("||Q^T Q - alpha||_F = {w:e}"));

    let w = params
        .drift
        .g_terms
        .iter()
        .flat_map(|g| [min_eig_or_nan(&g.p), min_eig_or_nan(&g.l)])
        .fold(f64::INFINITY, f64::min);
    push(
        &mut checks,
        "g_terms_psd",
        !(w < -EPS_PSD) && !w.is_nan(),
        w,
        format!("min eig over P_k, L_k = {w:e}"),
    );

    let rays = &params.jumps.rays;
    let w = rays
        .iter()
        .map(|r| (r.v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    push(&mut checks, "jump_directions_unit", w <= UNIT_TOL, w, format!("max | ||v|| - 1 | = {w:e}"));

    let w = rays.iter().map(|r| r.theta).fold(f64::INFINITY, f64::min);
    push(&mut checks, "jump_rates_positive", w > 0.0, w, format!("min theta = {w:e}"));

    let w = rays.iter().map(|r| r.lambda_const).fold(f64::INFINITY, f64::min);
    push(&mut checks, "jump_intensity_nonnegative", w >= 0.0, w, format!("min lambda_const = {w:e}"));

    let w = rays.iter().map(|r| min_eig_or_nan(&r.l_state)).fold(f64::INFINITY, f64::min);
    push(
        &mut checks,
        "jump_state_weights_psd",
        !(w < -EPS_PSD) && !w.is_nan(),
        w,
        format!("min eig over L_state = {w:e}"),
    );

    let w = drift_cone_witness(&params.drift, CONE_CHECK_PAIRS);
    let tol = 1e-10 * (1.0 + params.drift.m.frobenius_norm());
    push(
        &mut checks,
        "drift_cone_condition",
        w >= -tol,
        w,
        format!("min Tr[B(x) u] over {CONE_CHECK_PAIRS} orthogonal rank-one pairs = {w:e}"),
    );

    ValidationReport { checks }
}

/// Smallest `Tr[B(v v^T) w w^T]` over sampled orthonormal pairs `v, w`, for
/// which `Tr[x u] = (v.w)^2 = 0`. A sampling check, not a proof.
pub fn drift_cone_witness(drift: &LinearDriftMap, pairs: usize) -> f64 {
    let d = drift.dim();
    if d < 2 {
        return f64::INFINITY;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(CONE_CHECK_SEED);
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let (v, w) = sampling::random_orthogonal_pair(&mut rng, d);
        let x = SymMatrix::outer(&v);
        let u = SymMatrix::outer(&w);
        worst = worst.min(drift.apply_unchecked(&x).trace_product(&u));
    }
    worst
}

/// Parameter file section. Matrices are row-major nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub dim: usize,
    pub alpha: SymMatrix,
    pub b: SymMatrix,
    #[serde(rename = "M")]
    pub m: Matrix,
    #[serde(rename = "G_terms", default)]
    pub g_terms: Vec<GTerm>,
    #[serde(default)]
    pub jumps: Vec<JumpRay>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Matrix>,
}

impl TryFrom<ParamsSpec> for AdmissibleParams {
    type Error = Error;

    fn try_from(spec: ParamsSpec) -> Result<Self> {
        spec.alpha.check_dim(spec.dim)?;
        AdmissibleParams::new(
            spec.alpha,
            spec.b,
            LinearDriftMap::with_g_terms(spec.m, spec.g_terms),
            JumpRayFamily::new(spec.jumps),
            spec.q,
        )
    }
}

impl From<&AdmissibleParams> for ParamsSpec {
    fn from(p: &AdmissibleParams) -> Self {
        ParamsSpec {
            dim: p.dim(),
            alpha: p.alpha.clone(),
            b: p.b.clone(),
            m: p.drift.m.clone(),
            g_terms: p.drift.g_terms.clone(),
            jumps: p.jumps.rays.clone(),
            q: Some(p.q.clone()),
        }
    }
}

/// Convenience: PSD check returning the certified matrix.
pub fn require_psd(m: &SymMatrix, what: &str) -> Result<PsdMatrix> {
    PsdMatrix::new(m.clone()).map_err(|e| Error::Domain(format!("{what}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_matrix, random_psd, random_sym};
    use rand::Rng;

    fn i2() -> SymMatrix {
        SymMatrix::identity(2)
    }

    fn simple(alpha: SymMatrix, b: SymMatrix, m: Matrix) -> AdmissibleParams {
        AdmissibleParams::new(alpha, b, LinearDriftMap::new(m), JumpRayFamily::none(), None).unwrap()
    }

    #[test]
    fn boundary_b_equals_alpha_passes() {
        let p = simple(i2(), i2(), Matrix::zeros(2));
        let report = validate(&p);
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.check("b_dominates_alpha").unwrap().witness, 0.0);
    }

    #[test]
    fn b_below_alpha_fails_with_witness() {
        let p = simple(i2(), i2().scale(0.5), Matrix::zeros(2));
        let report = validate(&p);
        assert!(!report.passed());
        let c = report.check("b_dominates_alpha").unwrap();
        assert!(!c.passed);
        assert!((c.witness + 0.5).abs() < 1e-15);
        assert!(matches!(report.into_result(), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn wishart_with_mean_reversion_passes() {
        let p = AdmissibleParams::wishart(3.0, Matrix::identity(2).scale(-0.5), Matrix::identity(2)).unwrap();
        assert!(validate(&p).passed());
        assert_eq!(p.wishart_index(), Some(3.0));
    }

    #[test]
    fn wishart_index_threshold() {
        for d in 2..6 {
            for (delta, ok) in [(d as f64 - 1.0, true), (d as f64 - 1.0 - 1e-3, false), (d as f64 + 2.5, true)] {
                let p = AdmissibleParams::wishart(delta, Matrix::zeros(d), Matrix::identity(d)).unwrap();
                assert_eq!(validate(&p).passed(), ok, "d={d} delta={delta}");
            }
        }
    }

    #[test]
    fn eval_b_examples() {
        let z = i2();
        assert_eq!(LinearDriftMap::zero(2).apply(&z).unwrap(), SymMatrix::zeros(2));
        let b = LinearDriftMap::new(Matrix::identity(2)).apply(&z).unwrap();
        assert_eq!(b, i2().scale(2.0));
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let b = LinearDriftMap::new(m).apply(&z).unwrap();
        assert_eq!(b, SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert!(LinearDriftMap::zero(2).apply(&SymMatrix::identity(3)).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let p_term = GTerm {
            p: SymMatrix::diag(&[1.0, 0.0]),
            l: SymMatrix::diag(&[0.0, 2.0]),
        };
        let g_only = LinearDriftMap::with_g_terms(Matrix::zeros(2), vec![p_term.clone()]);
        let u = SymMatrix::diag(&[3.0, 5.0]);
        // Tr[P u] L = 3 * diag(0, 2)
        assert_eq!(g_only.adjoint(&u).unwrap(), SymMatrix::diag(&[0.0, 6.0]));
        let m_only = LinearDriftMap::new(Matrix::identity(2));
        assert_eq!(m_only.adjoint(&i2()).unwrap(), i2().scale(2.0));
    }

    #[test]
    fn adjoint_identity_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10_000 {
            let d = rng.random_range(2..5);
            let g_terms = (0..rng.random_range(0..3))
                .map(|_| GTerm {
                    p: random_psd(&mut rng, d, 1.0).into_sym(),
                    l: random_psd(&mut rng, d, 1.0).into_sym(),
                })
                .collect();
            let drift = LinearDriftMap::with_g_terms(random_matrix(&mut rng, d, 1.0), g_terms);
            let u = random_sym(&mut rng, d, 1.0);
            let y = random_sym(&mut rng, d, 1.0);
            let lhs = drift.adjoint(&u).unwrap().trace_product(&y);
            let rhs = drift.apply(&y).unwrap().trace_product(&u);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        }
    }

    fn one_ray(lambda: f64, theta: f64) -> JumpRay {
        JumpRay::new(vec![1.0, 0.0], theta, lambda, SymMatrix::identity(2).scale(0.5))
    }

    #[test]
    fn jump_integral_examples() {
        let fam = JumpRayFamily::new(vec![one_ray(1.0, 1.0)]);
        let zero = SymMatrix::zeros(2);
        assert_eq!(fam.exp_integral(&zero, JumpPart::Constant).unwrap(), JumpIntegral::Constant(0.0));
        assert_eq!(fam.exp_integral(&zero, JumpPart::Linear).unwrap(), JumpIntegral::Linear(SymMatrix::zeros(2)));

        let JumpIntegral::Constant(c) = fam.exp_integral(&i2(), JumpPart::Constant).unwrap() else {
            unreachable!()
        };
        assert!((c + 0.5).abs() < 1e-15);

        let two = JumpRayFamily::new(vec![one_ray(1.0, 1.0), one_ray(1.0, 1.0)]);
        let JumpIntegral::Constant(c2) = two.exp_integral(&i2(), JumpPart::Constant).unwrap() else {
            unreachable!()
        };
        assert!((c2 - 2.0 * c).abs() < 1e-15);

        let JumpIntegral::Linear(l) = fam.exp_integral(&i2(), JumpPart::Linear).unwrap() else {
            unreachable!()
        };
        assert_eq!(l, SymMatrix::identity(2).scale(-0.25));

        assert!(matches!(
            fam.exp_integral(&SymMatrix::diag(&[1.0, -1.0]), JumpPart::Constant),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn jump_integral_quadrature_oracle() {
        // int_0^inf (e^{-g q} - 1) theta e^{-theta g} dg by the trapezoid rule
        let ray = JumpRay::new(vec![0.6, 0.8], 2.5, 1.0, SymMatrix::zeros(2));
        let u = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.7]]).unwrap();
        let q = ray.weight(&u);
        let n = 400_000;
        let h = 40.0 / n as f64;
        let f = |g: f64| ((-g * q).exp() - 1.0) * ray.theta * (-ray.theta * g).exp();
        let mut acc = 0.5 * (f(0.0) + f(40.0));
        for k in 1..n {
            acc += f(k as f64 * h);
        }
        let fam = JumpRayFamily::new(vec![ray]);
        let got = fam.constant_integral(&u);
        assert!((got - acc * h).abs() < 1e-8, "{got} vs {}", acc * h);
    }

    #[test]
    fn jump_integrals_vanish_at_origin_and_pair_non_positively() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fam = JumpRayFamily::new(vec![one_ray(1.3, 0.7), JumpRay::new(vec![0.0, 1.0], 2.0, 0.4, i2())]);
        let u = random_psd(&mut rng, 2, 1.0);
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let s = 10f64.powi(-k);
            let c = fam.constant_integral(&u.scale(s)).abs();
            assert!(c <= last);
            last = c;
        }
        assert!(last < 1e-10);
        for _ in 0..500 {
            let u = random_psd(&mut rng, 2, 1.0);
            let x = random_psd(&mut rng, 2, 1.0);
            assert!(fam.constant_integral(&u) <= 0.0);
            assert!(fam.linear_integral(&u, 2).trace_product(&x) <= 1e-15);
        }
    }

    #[test]
    fn cone_condition_witness_is_nonnegative_for_g_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = vec![GTerm {
            p: random_psd(&mut rng, 3, 1.0).into_sym(),
            l: random_psd(&mut rng, 3, 1.0).into_sym(),
        }];
        let drift = LinearDriftMap::with_g_terms(random_matrix(&mut rng, 3, 1.0), g);
        assert!(drift_cone_witness(&drift, 500) >= -1e-12);
    }

    #[test]
    fn invalid_jump_spec_reported() {
        let bad = JumpRay::new(vec![1.0, 1.0], -1.0, -0.5, SymMatrix::diag(&[1.0, -1.0]));
        let p = AdmissibleParams::new(i2(), i2(), LinearDriftMap::zero(2), JumpRayFamily::new(vec![bad]), None).unwrap();
        let r = validate(&p);
        for name in ["jump_directions_unit", "jump_rates_positive", "jump_intensity_nonnegative", "jump_state_weights_psd"] {
            assert!(!r.check(name).unwrap().passed, "{name}");
        }
    }

    #[test]
    fn q_defaults_to_symmetric_root() {
        let alpha = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = simple(alpha.clone(), alpha.scale(2.0), Matrix::zeros(2));
        let qtq = &p.q.transpose() * &p.q;
        assert!((&qtq - alpha.as_matrix()).frobenius_norm() < 1e-12);
        assert!(validate(&p).check("q_factorises_alpha").unwrap().passed);
    }

    #[test]
    fn spec_roundtrip_through_json() {
        let json = r#"{
            "dim": 2,
            "alpha": [[1, 0], [0, 1]],
            "b": [[3, 0], [0, 3]],
            "M": [[-0.5, 0], [0, -0.5]],
            "G_terms": [{"P": [[1, 0], [0, 0]], "L": [[0, 0], [0, 1]]}],
            "jumps": [{"v": [1, 0], "theta": 2.0, "lambda_const": 0.5, "L_state": [[0.1, 0], [0, 0.1]]}]
        }"#;
        let spec: ParamsSpec = serde_json::from_str(json).unwrap();
        let p = AdmissibleParams::try_from(spec).unwrap();
        assert!(validate(&p).passed());
        assert_eq!(p.jumps.len(), 1);
        let again: ParamsSpec = serde_json::from_str(&serde_json::to_string(&ParamsSpec::from(&p)).unwrap()).unwrap();
        assert_eq!(AdmissibleParams::try_from(again).unwrap(), p);
    }
}
