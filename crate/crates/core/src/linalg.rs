//! Small dense helpers on top of `faer`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Builds a matrix from equal-length row slices.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let m = rows.first().map_or(0, |r| r.len());
    for row in rows {
        if row.len() != m {
            return Err(Error::dim("matrix row", m, row.len()));
        }
    }
    Ok(Mat::from_fn(rows.len(), m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn diagonal(values: &[f64]) -> Mat<f64> {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
}

pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

/// `xᵀ A x`.
pub fn quad_form(a: &Mat<f64>, x: &[f64]) -> f64 {
    let ax = mat_vec(a, x);
    ax.iter().zip(x).map(|(p, q)| p * q).sum()
}

pub fn frobenius(a: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

pub fn max_abs(a: &Mat<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Largest `|a_ij - a_ji|`.
pub fn asymmetry(a: &Mat<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..j {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// Symmetric eigendecomposition; eigenvalues ascending, eigenvectors as columns.
pub fn symmetric_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver did not converge: {e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..a.nrows()).map(|i| s[i]).collect();
    let u = evd.U();
    let vectors = Mat::from_fn(a.nrows(), a.ncols(), |i, j| u[(i, j)]);
    Ok((values, vectors))
}

/// `U diag(f(λ)) Uᵀ`.
pub fn spectral_map(values: &[f64], vectors: &Mat<f64>, f: impl Fn(f64) -> f64) -> Mat<f64> {
    let n = values.len();
    let mapped: Vec<f64> = values.iter().map(|&v| f(v)).collect();
    Mat::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| vectors[(i, k)] * mapped[k] * vectors[(j, k)])
            .sum()
    })
}

/// Inverse and log-determinant of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse_logdet(a: &Mat<f64>) -> Result<(Mat<f64>, f64)> {
    let n = a.nrows();
    let llt = a
        .llt(Side::Lower)
        .map_err(|_| Error::Precondition("matrix is not symmetric positive definite".into()))?;
    let l = llt.L();
    let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let inv = llt.inverse();
    // symmetrize away rounding so quadratic forms are exactly symmetric
    let inv = Mat::from_fn(n, n, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]));
    Ok((inv, logdet))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
