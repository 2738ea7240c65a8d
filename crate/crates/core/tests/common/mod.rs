//! Independent oracles and fixtures shared by the integration tests.
//!
//! Nothing here calls the solver, SVD or extraction code under test.
#![allow(dead_code)]

use emreduce_core::rng::{seeded, Rng};
use emreduce_core::{EndmemberSet, Provenance, SpectralImage};
use nalgebra::DMatrix;
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    seeded(seed ^ 0x5e_ed0f_7e57)
}

pub fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn set_of(spectra: DMatrix<f64>) -> EndmemberSet {
    let members = (0..spectra.ncols()).map(Provenance::pixel).collect();
    EndmemberSet::new(spectra, members, "test").unwrap()
}

pub fn image_of(data: DMatrix<f64>) -> SpectralImage {
    SpectralImage::new(data).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-32 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// Condition number from the eigenvalues of the Gram matrix `EᵀE`,
/// computed with explicit loops.
pub fn gram_condition(e: &DMatrix<f64>) -> f64 {
    let m = e.ncols();
    let gram = DMatrix::from_fn(m, m, |i, j| (0..e.nrows()).map(|k| e[(k, i)] * e[(k, j)]).sum());
    let eig = jacobi_eigenvalues(gram);
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    (max / min).sqrt()
}

/// `‖E·a − x‖₂` with explicit loops.
pub fn residual_norm(e: &DMatrix<f64>, a: &[f64], x: &[f64]) -> f64 {
    (0..e.nrows())
        .map(|i| {
            let r: f64 = (0..e.ncols()).map(|j| e[(i, j)] * a[j]).sum::<f64>() - x[i];
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Minimum of `‖E·a − x‖₂` over the grid `{a ≥ 0, Σa = 1, a ∈ step·ℤ³}`.
pub fn simplex_grid_min3(e: &DMatrix<f64>, x: &[f64], step: f64) -> f64 {
    assert_eq!(e.ncols(), 3);
    let k = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=k {
        for j in 0..=(k - i) {
            let a0 = i as f64 / k as f64;
            let a1 = j as f64 / k as f64;
            let a = [a0, a1, (k - i - j) as f64 / k as f64];
            best = best.min(residual_norm(e, &a, x));
        }
    }
    best
}

/// Triple-loop matrix product.
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        (0..a.ncols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
}

/// Per-candidate score of removing each member, evaluated from κ and RMSE
/// values the caller supplies.
pub fn blend(alpha: f64, k0: f64, k1: f64, r0: f64, r1: f64, eps_rmse: f64) -> f64 {
    let rt = if r0 < eps_rmse { 0.0 } else { (r0 - r1) / r0 };
    (1.0 - alpha) * (k0 - k1) / k0 + alpha * rt
}
