//! Thin helpers over nalgebra for the small dense systems used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Numerical rank with threshold `rel · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * smax).count()
}

/// 2-norm condition number.
pub fn cond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    lu.solve(b).filter(|x| x.iter().all(|v| v.is_finite())).ok_or_else(|| {
        Error::Singular(format!("{}x{} system (condition {:.3e})", a.nrows(), a.ncols(), cond(a)))
    })
}

pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `true` if the symmetric matrix is negative definite.
pub fn negative_definite(m: &DMatrix<f64>) -> bool {
    (-m.clone()).cholesky().is_some()
}
