//! Hyper-parameter M-steps and ELBO gradients.

use nalgebra::DMatrix;

use super::update::resolve;
use super::{HyperParams, VariationalPosterior};
use crate::error::{Error, Result};
use crate::kernels::KernelParam;

/// `mu_k := lambda_k`, the stationary point of the ELBO in the prior means.
pub fn m_step_mu(post: &VariationalPosterior, hyper: &mut HyperParams) {
    for (mu, factor) in hyper.mu.iter_mut().zip(&post.factors) {
        mu.copy_from(&factor.mean);
    }
}

/// Optimal scale for `Sigma = theta * base`:
/// `theta = sum_k tr(base^-1 (V_k + d_k d_k^T)) / ((K-1) C)` with `d_k = mu_k - lambda_k`.
pub fn m_step_theta_scale(post: &VariationalPosterior, hyper: &HyperParams) -> Result<f64> {
    let cov = hyper.covariance();
    let mut total = 0.0;
    for (k, factor) in post.factors.iter().enumerate() {
        let r = resolve(factor, &hyper.mu[k], cov)?;
        let diff = &factor.mean - &hyper.mu[k];
        total += r.trace_base + diff.dot(&r.alpha_base);
    }
    let theta = total / (post.n_factors() * post.n_covariates()) as f64;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Numerical(format!("closed-form scale update produced {theta}")));
    }
    Ok(theta)
}

/// `dL/d param = -1/2 [ (K-1) tr(Sigma^-1 Sigma') - tr(Sigma^-1 Sigma' Sigma^-1 S) ]`
/// with `S = sum_k V_k + (mu_k - lambda_k)(mu_k - lambda_k)^T`.
pub fn elbo_grad(post: &VariationalPosterior, hyper: &HyperParams, param: KernelParam) -> Result<f64> {
    let cov = hyper.covariance();
    let theta = cov.theta;
    let c_n = post.n_covariates();
    let mut s = DMatrix::zeros(c_n, c_n);
    for (k, factor) in post.factors.iter().enumerate() {
        s += &factor.cov;
        let d = &hyper.mu[k] - &factor.mean;
        s.ger(1.0, &d, &d, 1.0);
    }
    let deriv = cov.derivative(param, &hyper.kernel().distance);
    // Sigma^-1 X = base^-1 X / theta.
    let a = cov.base_chol.solve_mat(&deriv) / theta;
    let b = cov.base_chol.solve_mat(&s) / theta;
    let first = post.n_factors() as f64 * a.trace();
    let second = a.component_mul(&b.transpose()).sum();
    let g = -0.5 * (first - second);
    if !g.is_finite() {
        return Err(Error::Numerical("ELBO gradient is not finite".into()));
    }
    Ok(g)
}
