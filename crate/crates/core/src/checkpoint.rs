//! JSON checkpoints of a fitted model. Floats are written with the shortest
//! representation that parses back to the same bits, so a save/load cycle is
//! exact.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::counts::{compute_stick_stats, CountMatrix};
use crate::error::{validation, Result};
use crate::kernels::KernelSpec;
use crate::pgvi::{GaussianFactor, HyperParams, VariationalPosterior};

pub const KERNEL_TYPE: &str = "squared_exponential";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelRecord {
    #[serde(rename = "type")]
    pub kind: String,
    pub theta: f64,
    pub lengthscale: f64,
    pub distance_matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    #[serde(rename = "C")]
    pub n_covariates: usize,
    #[serde(rename = "K")]
    pub n_categories: usize,
    pub kernel: KernelRecord,
    /// `K-1` prior mean vectors of length `C`.
    pub mu: Vec<Vec<f64>>,
    /// `K-1` posterior mean vectors of length `C`.
    pub lambda: Vec<Vec<f64>>,
    /// `K-1` posterior covariances, each `C*C` values in row-major order.
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    /// `C` rows of `K-1` Polya-Gamma tilting parameters.
    pub w: Vec<Vec<f64>>,
    /// The `C x K` counts the posterior was fitted to.
    pub counts: Vec<Vec<u64>>,
    pub elbo_trace: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Checkpoint {
    pub fn new(
        hyper: &HyperParams,
        posterior: &VariationalPosterior,
        counts: &CountMatrix,
        elbo_trace: &[f64],
    ) -> Self {
        let kernel = hyper.kernel();
        Self {
            n_covariates: hyper.n_covariates(),
            n_categories: hyper.n_factors() + 1,
            kernel: KernelRecord {
                kind: KERNEL_TYPE.to_string(),
                theta: kernel.theta,
                lengthscale: kernel.lengthscale,
                distance_matrix: rows(&kernel.distance),
            },
            mu: hyper.mu.iter().map(|m| m.iter().copied().collect()).collect(),
            lambda: posterior.factors.iter().map(|f| f.mean.iter().copied().collect()).collect(),
            v: posterior.factors.iter().map(|f| f.cov.transpose().iter().copied().collect()).collect(),
            w: rows(&posterior.w),
            counts: (0..counts.n_covariates()).map(|c| counts.row(c).to_vec()).collect(),
            elbo_trace: elbo_trace.to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        ck.check_shapes()?;
        Ok(ck)
    }

    fn check_shapes(&self) -> Result<()> {
        let (c, k) = (self.n_covariates, self.n_categories);
        if c == 0 || k < 2 {
            return Err(validation("checkpoint needs C >= 1 and K >= 2"));
        }
        if self.kernel.kind != KERNEL_TYPE {
            return Err(validation(format!("unsupported kernel type {:?}", self.kernel.kind)));
        }
        let sized = |v: &[Vec<f64>], outer: usize, inner: usize| v.len() == outer && v.iter().all(|r| r.len() == inner);
        if !sized(&self.kernel.distance_matrix, c, c) {
            return Err(validation("distance_matrix must be C x C"));
        }
        if !sized(&self.mu, k - 1, c) || !sized(&self.lambda, k - 1, c) {
            return Err(validation("mu and lambda must hold K-1 vectors of length C"));
        }
        if !sized(&self.v, k - 1, c * c) {
            return Err(validation("V must hold K-1 row-major C x C matrices"));
        }
        if !sized(&self.w, c, k - 1) {
            return Err(validation("w must be C x (K-1)"));
        }
        if self.counts.len() != c || self.counts.iter().any(|r| r.len() != k) {
            return Err(validation("counts must be C x K"));
        }
        Ok(())
    }

    /// Rebuilds the prior hyper-parameters, the posterior and the counts.
    pub fn restore(&self) -> Result<(HyperParams, VariationalPosterior, CountMatrix)> {
        self.check_shapes()?;
        let c = self.n_covariates;
        let distance = DMatrix::from_fn(c, c, |i, j| self.kernel.distance_matrix[i][j]);
        let kernel = KernelSpec::new(self.kernel.theta, self.kernel.lengthscale, distance)?;
        let mu = self.mu.iter().map(|m| DVector::from_column_slice(m)).collect();
        let hyper = HyperParams::new(mu, kernel)?;
        let counts = CountMatrix::from_rows(&self.counts)?;
        let factors = self
            .lambda
            .iter()
            .zip(&self.v)
            .map(|(l, v)| GaussianFactor::from_moments(DVector::from_column_slice(l), DMatrix::from_row_slice(c, c, v)))
            .collect::<Result<Vec<_>>>()?;
        let w = DMatrix::from_fn(c, self.n_categories - 1, |i, j| self.w[i][j]);
        let posterior = VariationalPosterior { factors, w, stats: compute_stick_stats(&counts) };
        Ok((hyper, posterior, counts))
    }
}
