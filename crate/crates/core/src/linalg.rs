//! Thin helpers over `faer` dense complex linear algebra.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use thiserror::Error;

use crate::C64;

pub type CMat = Mat<C64>;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("eigendecomposition did not converge")]
    NoConvergence,
    #[error("singular value decomposition did not converge")]
    SvdFailed,
}

pub fn zeros(n: usize) -> CMat {
    Mat::zeros(n, n)
}

/// Eigenvalues and right eigenvectors (as columns) of a general matrix.
pub fn eigen_general(m: &CMat) -> Result<(Vec<C64>, CMat), LinalgError> {
    let e = m.eigen().map_err(|_| LinalgError::NoConvergence)?;
    let values = (0..m.nrows()).map(|i| e.S()[i]).collect();
    Ok((values, e.U().to_owned()))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
/// Only the lower triangle is read.
pub fn eigen_hermitian(m: &CMat) -> Result<(Vec<f64>, CMat), LinalgError> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LinalgError::NoConvergence)?;
    let values = (0..m.nrows()).map(|i| e.S()[i].re).collect();
    Ok((values, e.U().to_owned()))
}

pub fn eigenvalues_hermitian(m: &CMat) -> Result<Vec<f64>, LinalgError> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| LinalgError::NoConvergence)
}

pub fn eigenvalues_general(m: &CMat) -> Result<Vec<C64>, LinalgError> {
    m.eigenvalues().map_err(|_| LinalgError::NoConvergence)
}

pub fn inverse(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

/// 2-norm condition number `σ_max / σ_min`.
pub fn condition_number(m: &CMat) -> Result<f64, LinalgError> {
    let s = m.singular_values().map_err(|_| LinalgError::SvdFailed)?;
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

pub fn determinant(m: &CMat) -> C64 {
    m.determinant()
}

pub fn matvec(m: &CMat, v: &[C64]) -> Vec<C64> {
    assert_eq!(m.ncols(), v.len());
    let mut out = vec![C64::new(0.0, 0.0); m.nrows()];
    for (j, vj) in v.iter().enumerate() {
        if *vj == C64::new(0.0, 0.0) {
            continue;
        }
        let col = m.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * vj;
        }
    }
    out
}

pub fn column(m: &CMat, j: usize) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// `a† b`
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// `max |m - m†|`
pub fn hermiticity_error(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut err = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

/// Orthonormalizes the given vectors in place (modified Gram-Schmidt, two
/// passes). Returns `false` if they are numerically dependent.
pub fn orthonormalize(vectors: &mut [Vec<C64>]) -> bool {
    for i in 0..vectors.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = vectors.split_at_mut(i);
                let proj = inner(&head[j], &tail[0]);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= proj * y;
                }
            }
        }
        let n = norm_sqr(&vectors[i]).sqrt();
        if n < 1e-12 {
            return false;
        }
        for x in vectors[i].iter_mut() {
            *x /= n;
        }
    }
    true
}
