//! Dense square matrices, symmetric matrices and the cone of positive
//! semidefinite matrices.
//!
//! Matrices are small (d between 2 and 10), stored dense and row-major.
//! Symmetric matrices are built from their upper triangle so that
//! `a[i][j] == a[j][i]` holds bit-for-bit. Spectral work goes through a
//! cyclic Jacobi eigen-solver.

use std::fmt;
use std::ops::{Add, Deref, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

/// Absolute tolerance on eigenvalues for cone membership.
pub const EPS_PSD: f64 = 1e-10;
/// Relative Frobenius tolerance for `sqrt_psd(x)^2 == x`.
pub const EPS_SQRT: f64 = 1e-10;
/// Absolute tolerance for symmetry of matrix literals.
pub const SYMMETRY_TOL: f64 = 1e-12;

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Inline storage covers every dimension up to 4 without heap allocation.
type Store = SmallVec<[f64; 16]>;

/// A dense square real matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Store,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: smallvec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Store::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major storage of length `dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data: data.into() })
    }

    /// Builds a matrix from nested rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Store::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self::from_fn(d, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            for k in 0..d {
                acc += self.data[i * d + k] * other.data[k * d + i];
            }
        }
        acc
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim,
            });
        }
        Ok(())
    }

    fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim, "matrix product dimension mismatch");
        let d = self.dim;
        let mut out: Store = smallvec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                let dst = &mut out[i * d..(i + 1) * d];
                for (o, b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Matrix { dim: d, data: out }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.dim, other.dim, "matrix dimension mismatch");
        Matrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim)).finish()
    }
}

impl<'a> Mul<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &'a Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl<'a> Add<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn add(self, rhs: &'a Matrix) -> Matrix {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<'a> Sub<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &'a Matrix) -> Matrix {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A real symmetric matrix. Symmetry is exact: the lower triangle is always
/// a copy of the upper triangle.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(Matrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    pub fn diag(values: &[f64]) -> Self {
        Self(Matrix::diag(values))
    }

    /// Builds from a function evaluated on the upper triangle (`i <= j`).
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Self(m)
    }

    /// Copies the upper triangle of `m` onto its lower triangle.
    pub fn from_upper_of(m: &Matrix) -> Self {
        Self::from_upper(m.dim(), |i, j| m.get(i, j))
    }

    /// Symmetric part `(m + m^T) / 2`.
    pub fn symmetrize(m: &Matrix) -> Self {
        Self::from_upper(m.dim(), |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
    }

    /// Validates symmetry of `m` within `tol` (absolute), then copies the upper triangle.
    pub fn try_from_matrix(m: &Matrix, tol: f64) -> Result<Self> {
        let d = m.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                let gap = (m.get(i, j) - m.get(j, i)).abs();
                if !(gap <= tol) {
                    return Err(Error::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(Self::from_upper_of(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::try_from_matrix(&Matrix::from_rows(rows)?, SYMMETRY_TOL)
    }

    /// The rank-one matrix `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_upper(v.len(), |i, j| v[i] * v[j])
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.scale(factor))
    }

    /// `a * self * a^T`, symmetric for any square `a`.
    pub fn congruence(&self, a: &Matrix) -> SymMatrix {
        SymMatrix::symmetrize(&(&(a * &self.0) * &a.transpose()))
    }

    /// `v^T self v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        v.iter()
            .enumerate()
            .map(|(i, vi)| vi * v.iter().enumerate().map(|(j, vj)| self.get(i, j) * vj).sum::<f64>())
            .sum()
    }

    pub fn eigen(&self) -> Result<SymEigen> {
        jacobi_eigen(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigen()?.values[0])
    }

    /// Upper-triangle entries in row-major order: `a11, a12, .., a1d, a22, ..`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

impl Deref for SymMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<'a> Add<&'a SymMatrix> for &'a SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &'a SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a SymMatrix> for &'a SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &'a SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scale(-1.0)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A symmetric matrix certified to lie in the PSD cone within [`EPS_PSD`].
#[derive(Clone, Debug, PartialEq)]
pub struct PsdMatrix {
    base: SymMatrix,
    min_eig: f64,
}

impl PsdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        let min_eig = base.min_eigenvalue()?;
        if min_eig < -EPS_PSD {
            return Err(Error::NotPsd { min_eig });
        }
        Ok(Self { base, min_eig })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            base: SymMatrix::zeros(dim),
            min_eig: 0.0,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            base: SymMatrix::identity(dim),
            min_eig: 1.0,
        }
    }

    /// Smallest eigenvalue computed at construction.
    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn into_sym(self) -> SymMatrix {
        self.base
    }
}

impl Deref for PsdMatrix {
    type Target = SymMatrix;
    fn deref(&self) -> &SymMatrix {
        &self.base
    }
}

/// Eigen-decomposition `a = V diag(values) V^T` with ascending eigenvalues;
/// column `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// Reassembles `V diag(f(values)) V^T`.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.values.len();
        let mapped: SmallVec<[f64; 4]> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        SymMatrix::from_upper(d, |i, j| {
            (0..d).map(|k| v.get(i, k) * mapped[k] * v.get(j, k)).sum()
        })
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.vectors.get(i, k)).collect()
    }
}

fn off_diagonal_norm(a: &[f64], d: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc += a[i * d + j] * a[i * d + j];
            }
        }
    }
    acc.sqrt()
}

/// Cyclic Jacobi rotations; stops once the off-diagonal Frobenius norm drops
/// below `1e-12 * ||a||_F`.
fn jacobi_eigen(x: &SymMatrix) -> Result<SymEigen> {
    let d = x.dim();
    if !x.is_finite() {
        return Err(Error::Numerical("eigen-decomposition of non-finite matrix".into()));
    }
    let mut a = Store::from_slice(x.as_slice());
    let mut v = Matrix::identity(d).data;
    let threshold = JACOBI_REL_TOL * x.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, d);
        if off <= threshold {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;

                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: SmallVec<[usize; 4]> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].total_cmp(&a[j * d + j]));
    let values = order.iter().map(|&k| a[k * d + k]).collect();
    let vectors = Matrix::from_fn(d, |i, j| v[i * d + order[j]]);
    Ok(SymEigen { values, vectors })
}

/// `Tr[a b]`, the trace inner product on symmetric matrices.
pub fn trace_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    b.check_dim(a.dim())?;
    Ok(a.trace_product(b))
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues are clipped.
pub fn sqrt_psd(x: &PsdMatrix) -> Result<PsdMatrix> {
    let eig = x.eigen()?;
    let min_eig = eig.values[0].max(0.0).sqrt();
    Ok(PsdMatrix {
        base: eig.reassemble(|l| l.max(0.0).sqrt()),
        min_eig,
    })
}

/// Frobenius-nearest PSD matrix: eigenvalues clipped at zero.
pub fn project_psd(x: &SymMatrix) -> Result<PsdMatrix> {
    let eig = x.eigen()?;
    if eig.values[0] >= 0.0 {
        return Ok(PsdMatrix {
            base: x.clone(),
            min_eig: eig.values[0],
        });
    }
    let base = eig.reassemble(|l| l.max(0.0));
    Ok(PsdMatrix { base, min_eig: 0.0 })
}

/// Projection together with the square root of the projected matrix, sharing
/// one eigen-decomposition.
pub fn project_and_sqrt(x: &SymMatrix) -> Result<(PsdMatrix, SymMatrix)> {
    if x.dim() == 2 {
        return project_and_sqrt_2x2(x);
    }
    let eig = x.eigen()?;
    let min_eig = eig.values[0].max(0.0);
    let projected = if eig.values[0] >= 0.0 {
        x.clone()
    } else {
        eig.reassemble(|l| l.max(0.0))
    };
    let root = eig.reassemble(|l| l.max(0.0).sqrt());
    Ok((
        PsdMatrix {
            base: projected,
            min_eig,
        },
        root,
    ))
}

/// The 2x2 case of [`project_and_sqrt`]: a single Jacobi rotation
/// diagonalises the matrix exactly, so the spectral functions are assembled
/// in closed form.
fn project_and_sqrt_2x2(x: &SymMatrix) -> Result<(PsdMatrix, SymMatrix)> {
    let (p, q, r) = (x.get(0, 0), x.get(0, 1), x.get(1, 1));
    if !(p.is_finite() && q.is_finite() && r.is_finite()) {
        return Err(Error::Numerical("eigen-decomposition of non-finite matrix".into()));
    }
    let t = if q == 0.0 {
        0.0
    } else {
        let theta = (r - p) / (2.0 * q);
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // eigenpairs (p - t q, (c, -s)) and (r + t q, (s, c))
    let (l1, l2) = (p - t * q, r + t * q);
    let assemble = |f1: f64, f2: f64| {
        let off = c * s * (f2 - f1);
        SymMatrix::from_upper(2, |i, j| match (i, j) {
            (0, 0) => f1 * c * c + f2 * s * s,
            (1, 1) => f1 * s * s + f2 * c * c,
            _ => off,
        })
    };
    let min_eig = l1.min(l2);
    let projected = if min_eig >= 0.0 {
        x.clone()
    } else {
        assemble(l1.max(0.0), l2.max(0.0))
    };
    let root = assemble(l1.max(0.0).sqrt(), l2.max(0.0).sqrt());
    Ok((
        PsdMatrix {
            base: projected,
            min_eig: min_eig.max(0.0),
        },
        root,
    ))
}

/// Loewner order `x <= y`, i.e. `y - x` PSD within [`EPS_PSD`].
pub fn psd_order_leq(x: &SymMatrix, y: &SymMatrix) -> Result<bool> {
    y.check_dim(x.dim())?;
    Ok((y - x).min_eigenvalue()? >= -EPS_PSD)
}
