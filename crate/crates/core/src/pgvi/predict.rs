//! Predictive probability matrices from a fitted posterior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::VariationalPosterior;
use crate::error::{invalid, Result};
use crate::linalg::cholesky_with_jitter;
use crate::stick::{expected_sigmoid, stick_breaking_unchecked};

/// Draws joint samples `psi_k ~ N(lambda_k, V_k)` with the Cholesky factors
/// computed once. Immutable, so one sampler can serve many RNG streams.
#[derive(Clone, Debug)]
pub struct PosteriorSampler {
    means: Vec<DVector<f64>>,
    factors: Vec<DMatrix<f64>>,
}

impl PosteriorSampler {
    pub fn new(post: &VariationalPosterior) -> Result<Self> {
        let mut means = Vec::with_capacity(post.n_factors());
        let mut factors = Vec::with_capacity(post.n_factors());
        for f in &post.factors {
            means.push(f.mean.clone());
            factors.push(cholesky_with_jitter(&f.cov, "variational covariance (sampling)")?.l());
        }
        Ok(Self { means, factors })
    }

    pub fn n_covariates(&self) -> usize {
        self.means.first().map_or(0, DVector::len)
    }

    /// One `C x K` row-stochastic draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let c_n = self.n_covariates();
        let k1 = self.means.len();
        let mut psi = DMatrix::zeros(c_n, k1);
        for k in 0..k1 {
            let z = DVector::from_fn(c_n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let draw = &self.means[k] + &self.factors[k] * z;
            psi.set_column(k, &draw);
        }
        rows_through_stick(&psi)
    }
}

fn rows_through_stick(psi: &DMatrix<f64>) -> DMatrix<f64> {
    let c_n = psi.nrows();
    let k1 = psi.ncols();
    let mut out = DMatrix::zeros(c_n, k1 + 1);
    let mut row = vec![0.0; k1];
    for c in 0..c_n {
        for k in 0..k1 {
            row[k] = psi[(c, k)];
        }
        for (k, p) in stick_breaking_unchecked(&row).into_iter().enumerate() {
            out[(c, k)] = p;
        }
    }
    out
}

/// A single posterior draw of the `C x K` probability matrix.
pub fn posterior_sample_probs<R: Rng + ?Sized>(post: &VariationalPosterior, rng: &mut R) -> Result<DMatrix<f64>> {
    Ok(PosteriorSampler::new(post)?.sample(rng))
}

/// Monte Carlo estimate of `E_q[stick(psi_c)]` from `n_samples` joint draws.
pub fn posterior_mean_probs<R: Rng + ?Sized>(
    post: &VariationalPosterior,
    n_samples: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n_samples == 0 {
        return Err(invalid("n_samples must be at least 1"));
    }
    let sampler = PosteriorSampler::new(post)?;
    let mut acc = sampler.sample(rng);
    for _ in 1..n_samples {
        acc += sampler.sample(rng);
    }
    Ok(acc / n_samples as f64)
}

/// `E_q[stick(psi_c)]` evaluated by one-dimensional quadrature.
///
/// Under the mean-field posterior the `psi_ck` are independent across `k`,
/// so `E[p_ck] = E[sigmoid(psi_ck)] prod_{j<k} E[sigmoid(-psi_cj)]` exactly.
pub fn expected_probs(post: &VariationalPosterior) -> DMatrix<f64> {
    let c_n = post.n_covariates();
    let k1 = post.n_factors();
    let mut out = DMatrix::zeros(c_n, k1 + 1);
    for c in 0..c_n {
        let mut remaining = 1.0;
        for k in 0..k1 {
            let f = &post.factors[k];
            let (m, v) = (f.mean[c], f.cov[(c, c)].max(0.0));
            let e = expected_sigmoid(m, v);
            out[(c, k)] = remaining * e;
            remaining *= 1.0 - e;
        }
        out[(c, k1)] = remaining;
        let total: f64 = out.row(c).sum();
        for k in 0..=k1 {
            out[(c, k)] /= total;
        }
    }
    out
}
