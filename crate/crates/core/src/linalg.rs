//! Cholesky factorization with bounded jitter escalation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// First jitter tried, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-9;
/// Largest relative jitter before giving up.
pub const JITTER_MAX: f64 = 1e-3;
/// Pivots below this (relative to the mean diagonal) count as a failed
/// factorization: the matrix is numerically rank deficient.
const MIN_RELATIVE_PIVOT: f64 = 1e-10;

/// A Cholesky factor together with the diagonal jitter that was needed.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

fn try_plain(m: &DMatrix<f64>, mean_diag: f64) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let floor = MIN_RELATIVE_PIVOT * mean_diag;
    if (0..l.nrows()).all(|i| l[(i, i)] * l[(i, i)] >= floor) {
        Some(chol)
    } else {
        None
    }
}

/// Factorizes a symmetric matrix, adding `eps * mean(diag) * I` with `eps`
/// escalating from [`JITTER_START`] by factors of ten up to [`JITTER_MAX`].
pub fn cholesky_with_jitter(m: &DMatrix<f64>, what: &str) -> Result<JitteredCholesky> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Numerical(format!("{what}: matrix is not square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what}: matrix has non-finite entries")));
    }
    if n == 0 {
        return Ok(JitteredCholesky { chol: Cholesky::new(m.clone()).expect("empty"), jitter: 0.0 });
    }
    let mean_diag = (m.diagonal().sum() / n as f64).abs().max(f64::MIN_POSITIVE);
    if let Some(chol) = try_plain(m, mean_diag) {
        return Ok(JitteredCholesky { chol, jitter: 0.0 });
    }
    let mut eps = JITTER_START;
    while eps <= JITTER_MAX * (1.0 + 1e-12) {
        let jitter = eps * mean_diag;
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = try_plain(&jittered, mean_diag) {
            return Ok(JitteredCholesky { chol, jitter });
        }
        eps *= 10.0;
    }
    Err(Error::Numerical(format!(
        "{what}: not positive definite after jitter up to {JITTER_MAX:e} x mean diagonal ({mean_diag:e})"
    )))
}

/// Symmetrizes in place by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
