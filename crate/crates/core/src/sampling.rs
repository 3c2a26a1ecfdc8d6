//! Random matrix draws used by validation sampling and the identity checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::params::{AdmissibleParams, GTerm, JumpRay, JumpRayFamily, LinearDriftMap};
use crate::symcone::{Matrix, PsdMatrix, SymMatrix};

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Matrix {
    Matrix::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_sym<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> SymMatrix {
    SymMatrix::symmetrize(&random_matrix(rng, dim, scale))
}

/// `A A^T / dim` for Gaussian `A`, which is PSD by construction; a random
/// rank deficiency is introduced one time in four to exercise the boundary.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> PsdMatrix {
    let mut a = random_matrix(rng, dim, scale);
    if rng.random_range(0..4) == 0 {
        let col = rng.random_range(0..dim);
        for i in 0..dim {
            a.set(i, col, 0.0);
        }
    }
    let aat = SymMatrix::symmetrize(&(&a * &a.transpose())).scale(1.0 / dim as f64);
    PsdMatrix::new(aat).expect("Gram matrix is PSD")
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Two unit vectors with `v . w == 0` up to rounding.
pub fn random_orthogonal_pair<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let v = random_unit_vector(rng, dim);
    loop {
        let mut w = random_unit_vector(rng, dim);
        let dot: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= dot * vi;
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            w.iter_mut().for_each(|x| *x /= n);
            return (v, w);
        }
    }
}

/// A random admissible parameter set with a full diffusion factor, one
/// `G` term and one exponential jump ray with state-dependent intensity.
pub fn random_admissible<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> AdmissibleParams {
    let q = random_matrix(rng, dim, 0.5);
    let alpha = SymMatrix::symmetrize(&(&q.transpose() * &q));
    let b = &alpha.scale(dim as f64 - 1.0 + rng.random_range(0.0..2.0)) + &random_psd(rng, dim, 0.3);
    let g = vec![GTerm {
        p: random_psd(rng, dim, 0.3).into_sym(),
        l: random_psd(rng, dim, 0.3).into_sym(),
    }];
    let drift = LinearDriftMap::with_g_terms(random_matrix(rng, dim, 0.3), g);
    let ray = JumpRay::new(random_unit_vector(rng, dim), 1.5, 0.7, random_psd(rng, dim, 0.2).into_sym());
    AdmissibleParams::new(alpha, b, drift, JumpRayFamily::new(vec![ray]), Some(q)).expect("consistent dimensions")
}
