use super::update::resolve;
use super::{HyperParams, VariationalPosterior};
use crate::error::Result;
use crate::stick::{log_cosh, pg_mean_unchecked};

/// Evidence lower bound of the augmented model.
///
/// The Gaussian part is `-sum_k KL(N(lambda_k, V_k) || N(mu_k, Sigma))`. The
/// Polya-Gamma part includes `-E[omega](E[psi^2] - w^2)/2`, which vanishes
/// once `w` matches the current moments; keeping it makes the value a valid
/// bound for any `w`, so every coordinate step is monotone.
pub fn elbo(post: &VariationalPosterior, hyper: &HyperParams) -> Result<f64> {
    let cov = hyper.covariance();
    let c_n = post.n_covariates() as f64;
    let theta = cov.theta;
    let log_det_sigma = cov.log_det();

    let mut gaussian = 0.0;
    for (k, factor) in post.factors.iter().enumerate() {
        let r = resolve(factor, &hyper.mu[k], cov)?;
        let diff = &factor.mean - &hyper.mu[k];
        let quad = diff.dot(&r.alpha_base) / theta;
        let trace = r.trace_base / theta;
        gaussian -= 0.5 * (log_det_sigma - r.log_det + trace + quad - c_n);
    }

    let stats = &post.stats;
    let mut cells = stats.log_binom - std::f64::consts::LN_2 * stats.total_trials;
    for (k, factor) in post.factors.iter().enumerate() {
        for c in 0..post.n_covariates() {
            let b = stats.b[(c, k)];
            if b == 0.0 {
                continue;
            }
            let w = post.w[(c, k)];
            let lambda = factor.mean[c];
            let second = factor.cov[(c, c)] + lambda * lambda;
            let omega = pg_mean_unchecked(b, w);
            cells += stats.kappa[(c, k)] * lambda - b * log_cosh(0.5 * w) - 0.5 * omega * (second - w * w);
        }
    }
    Ok(gaussian + cells)
}
