//! Squared-exponential covariances over finite covariate spaces.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{cholesky_with_jitter, JitteredCholesky};

/// Kernel hyper-parameter addressed by gradient routines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelParam {
    Scale,
    Lengthscale,
}

/// `(Sigma)_{cc'} = theta * exp(-d(c,c')^2 / l^2)` over a fixed distance table.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub theta: f64,
    pub lengthscale: f64,
    pub distance: DMatrix<f64>,
}

impl KernelSpec {
    pub fn new(theta: f64, lengthscale: f64, distance: DMatrix<f64>) -> Result<Self> {
        let spec = Self { theta, lengthscale, distance };
        spec.validate()?;
        Ok(spec)
    }

    /// Uses the largest pairwise distance as length scale.
    pub fn with_max_distance_lengthscale(theta: f64, distance: DMatrix<f64>) -> Result<Self> {
        let l = max_distance(&distance);
        Self::new(theta, if l > 0.0 { l } else { 1.0 }, distance)
    }

    pub fn n_covariates(&self) -> usize {
        self.distance.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(invalid(format!("kernel scale must be positive, got {}", self.theta)));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(invalid(format!("kernel length scale must be positive, got {}", self.lengthscale)));
        }
        check_distance(&self.distance)
    }

    /// Unit-scale correlation matrix `exp(-d^2 / l^2)`.
    pub fn correlation(&self) -> DMatrix<f64> {
        let n = self.n_covariates();
        let inv_l2 = 1.0 / (self.lengthscale * self.lengthscale);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
            for j in (i + 1)..n {
                let d = self.distance[(i, j)];
                let v = (-d * d * inv_l2).exp();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

pub fn max_distance(distance: &DMatrix<f64>) -> f64 {
    distance.iter().copied().fold(0.0, f64::max)
}

pub fn check_distance(d: &DMatrix<f64>) -> Result<()> {
    let n = d.nrows();
    if n == 0 || d.ncols() != n {
        return Err(invalid("distance matrix must be square and nonempty"));
    }
    for i in 0..n {
        if d[(i, i)] != 0.0 {
            return Err(invalid(format!("distance diagonal must be zero (entry {i})")));
        }
        for j in 0..n {
            let v = d[(i, j)];
            if !(v >= 0.0 && v.is_finite()) || v != d[(j, i)] {
                return Err(invalid(format!("distance must be finite, nonnegative and symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Builds `Sigma_theta` and verifies it can be factorized (possibly with jitter).
pub fn build_covariance(spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut m = spec.correlation();
    m *= spec.theta;
    cholesky_with_jitter(&m, "kernel covariance")?;
    Ok(m)
}

/// Euclidean distances between 2-D grid coordinates.
pub fn grid_distance(positions: &[(i64, i64)]) -> DMatrix<f64> {
    let n = positions.len();
    DMatrix::from_fn(n, n, |i, j| {
        let dx = (positions[i].0 - positions[j].0) as f64;
        let dy = (positions[i].1 - positions[j].1) as f64;
        (dx * dx + dy * dy).sqrt()
    })
}

/// Euclidean distances between queue-length vectors after dividing each
/// coordinate by its buffer size.
pub fn queue_distance(states: &[[usize; 2]], buffers: [usize; 2]) -> DMatrix<f64> {
    let n = states.len();
    let scale = [buffers[0].max(1) as f64, buffers[1].max(1) as f64];
    DMatrix::from_fn(n, n, |i, j| {
        let a = (states[i][0] as f64 - states[j][0] as f64) / scale[0];
        let b = (states[i][1] as f64 - states[j][1] as f64) / scale[1];
        (a * a + b * b).sqrt()
    })
}

/// Factorized prior covariance in scaled form `Sigma = theta * base`.
///
/// `base` is the unit-scale correlation plus whatever diagonal jitter was
/// needed to factorize it. It is fixed for a given length scale, so the
/// closed-form scale update only needs this one factorization.
#[derive(Clone, Debug)]
pub struct ScaledCovariance {
    pub theta: f64,
    pub lengthscale: f64,
    pub base: DMatrix<f64>,
    pub base_chol: JitteredCholesky,
    pub base_log_det: f64,
    /// Jitter added to the unit-scale correlation.
    pub jitter: f64,
}

impl ScaledCovariance {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        let corr = spec.correlation();
        let chol = cholesky_with_jitter(&corr, "kernel correlation")?;
        let jitter = chol.jitter;
        let mut base = corr;
        for i in 0..base.nrows() {
            base[(i, i)] += jitter;
        }
        let base_chol = JitteredCholesky { chol: chol.chol, jitter: 0.0 };
        let base_log_det = base_chol.log_det();
        Ok(Self { theta: spec.theta, lengthscale: spec.lengthscale, base, base_chol, base_log_det, jitter })
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.base * self.theta
    }

    pub fn log_det(&self) -> f64 {
        self.dim() as f64 * self.theta.ln() + self.base_log_det
    }

    /// `d Sigma / d param` at the current parameters. Jitter is held fixed.
    pub fn derivative(&self, param: KernelParam, distance: &DMatrix<f64>) -> DMatrix<f64> {
        match param {
            KernelParam::Scale => self.base.clone(),
            KernelParam::Lengthscale => {
                let l = self.lengthscale;
                let n = self.dim();
                DMatrix::from_fn(n, n, |i, j| {
                    let d2 = distance[(i, j)] * distance[(i, j)];
                    self.theta * (-d2 / (l * l)).exp() * 2.0 * d2 / (l * l * l)
                })
            }
        }
    }
}
