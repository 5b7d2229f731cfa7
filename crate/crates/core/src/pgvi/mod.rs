//! Variational inference for the logistic stick-breaking multinomial model.
//!
//! Every category split `k` owns a Gaussian field `psi_k` over the covariates
//! with prior `N(mu_k, Sigma_theta)`. Given the Polya-Gamma auxiliaries the
//! likelihood is conjugate, so the mean-field posterior is Gaussian in
//! `psi_k` and tilted Polya-Gamma in `omega_ck`; both are updated in closed
//! form by coordinate ascent.
//!
//! Factor updates use the form `V = Sigma - Sigma S B^-1 S Sigma` with
//! `B = I + S Sigma S` and `S = diag(sqrt(E[omega]))` restricted to the
//! covariates that carry data. `B` has eigenvalues >= 1, so the update never
//! inverts the prior covariance and stays accurate for the nearly singular
//! kernels produced by long length scales.

mod elbo;
mod em;
mod fit;
mod predict;
mod update;

use nalgebra::{DMatrix, DVector};

pub use elbo::elbo;
pub use em::{elbo_grad, m_step_mu, m_step_theta_scale};
pub use fit::{fit, fit_warm, FitOptions, FitResult};
pub use predict::{expected_probs, posterior_mean_probs, posterior_sample_probs, PosteriorSampler};
pub use update::{update_factor, update_omega};

use crate::counts::StickStats;
use crate::error::{invalid, Result};
use crate::kernels::{KernelSpec, ScaledCovariance};
use crate::stick::{uniform_logits, uniform_predictive_logits};

/// Prior means `mu_k` and the covariance kernel shared by all `K-1` fields.
#[derive(Clone, Debug)]
pub struct HyperParams {
    pub mu: Vec<DVector<f64>>,
    kernel: KernelSpec,
    cov: ScaledCovariance,
}

impl HyperParams {
    pub fn new(mu: Vec<DVector<f64>>, kernel: KernelSpec) -> Result<Self> {
        let c = kernel.n_covariates();
        if mu.is_empty() {
            return Err(invalid("need at least one prior mean vector (K >= 2)"));
        }
        if let Some(bad) = mu.iter().position(|m| m.len() != c) {
            return Err(invalid(format!("prior mean {bad} has wrong length, expected {c}")));
        }
        if mu.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(invalid("prior means must be finite"));
        }
        let cov = ScaledCovariance::new(&kernel)?;
        Ok(Self { mu, kernel, cov })
    }

    /// Prior means whose stick-breaking image is the uniform distribution.
    pub fn uniform_centered(kernel: KernelSpec, n_categories: usize) -> Result<Self> {
        let c = kernel.n_covariates();
        let mu = uniform_logits(n_categories).into_iter().map(|m| DVector::from_element(c, m)).collect();
        Self::new(mu, kernel)
    }

    /// Prior means under which the expected category probabilities are
    /// uniform at every covariate.
    pub fn uniform_predictive(kernel: KernelSpec, n_categories: usize) -> Result<Self> {
        let c = kernel.n_covariates();
        let mu = uniform_predictive_logits(n_categories, kernel.theta)
            .into_iter()
            .map(|m| DVector::from_element(c, m))
            .collect();
        Self::new(mu, kernel)
    }

    pub fn zero_mean(kernel: KernelSpec, n_categories: usize) -> Result<Self> {
        let c = kernel.n_covariates();
        if n_categories < 2 {
            return Err(invalid("need at least two categories"));
        }
        Self::new(vec![DVector::zeros(c); n_categories - 1], kernel)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn covariance(&self) -> &ScaledCovariance {
        &self.cov
    }

    pub fn theta(&self) -> f64 {
        self.kernel.theta
    }

    pub fn lengthscale(&self) -> f64 {
        self.kernel.lengthscale
    }

    pub fn n_covariates(&self) -> usize {
        self.kernel.n_covariates()
    }

    pub fn n_factors(&self) -> usize {
        self.mu.len()
    }

    pub fn set_theta(&mut self, theta: f64) -> Result<()> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid(format!("kernel scale must be positive, got {theta}")));
        }
        self.kernel.theta = theta;
        self.cov.theta = theta;
        Ok(())
    }

    /// Changes the length scale and refactorizes the unit-scale correlation.
    pub fn set_lengthscale(&mut self, lengthscale: f64) -> Result<()> {
        let mut kernel = self.kernel.clone();
        kernel.lengthscale = lengthscale;
        let cov = ScaledCovariance::new(&kernel)?;
        self.kernel = kernel;
        self.cov = cov;
        Ok(())
    }
}

/// Cached scalar summaries of one Gaussian factor, expressed against the
/// unit-scale prior correlation `base` so that scale changes are free.
#[derive(Clone, Debug)]
pub(crate) struct FactorStats {
    /// `log |V_k|`.
    pub log_det: f64,
    /// `tr(base^-1 V_k)`.
    pub trace_base: f64,
    /// `base^-1 (lambda_k - mu_stamp)`.
    pub alpha_base: DVector<f64>,
    pub mu_stamp: DVector<f64>,
    pub lengthscale_stamp: f64,
    pub jitter_stamp: f64,
}

/// Gaussian variational factor `q(psi_k) = N(lambda_k, V_k)`.
#[derive(Clone, Debug)]
pub struct GaussianFactor {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub(crate) stats: Option<FactorStats>,
}

impl GaussianFactor {
    /// Builds a factor from raw moments; summaries are recomputed on demand.
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(invalid("factor covariance shape does not match its mean"));
        }
        Ok(Self { mean, cov, stats: None })
    }
}

/// Mean-field posterior over the latent fields and Polya-Gamma auxiliaries.
#[derive(Clone, Debug)]
pub struct VariationalPosterior {
    pub factors: Vec<GaussianFactor>,
    /// `C x (K-1)` tilting parameters of `q(omega_ck) = PG(b_ck, w_ck)`.
    pub w: DMatrix<f64>,
    pub stats: StickStats,
}

impl VariationalPosterior {
    /// The posterior equal to the prior: `lambda_k = mu_k`, `V_k = Sigma`,
    /// with `w` consistent with those moments.
    pub fn from_prior(hyper: &HyperParams, stats: StickStats) -> Result<Self> {
        check_shapes(hyper, &stats)?;
        let sigma = hyper.cov.covariance();
        let c = hyper.n_covariates();
        let factors = hyper
            .mu
            .iter()
            .map(|mu| GaussianFactor {
                mean: mu.clone(),
                cov: sigma.clone(),
                stats: Some(FactorStats {
                    log_det: hyper.cov.log_det(),
                    trace_base: hyper.theta() * c as f64,
                    alpha_base: DVector::zeros(c),
                    mu_stamp: mu.clone(),
                    lengthscale_stamp: hyper.lengthscale(),
                    jitter_stamp: hyper.cov.jitter,
                }),
            })
            .collect();
        let mut post = Self { factors, w: DMatrix::zeros(c, hyper.n_factors()), stats };
        update_omega(&mut post);
        Ok(post)
    }

    pub fn n_covariates(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn n_categories(&self) -> usize {
        self.factors.len() + 1
    }

    /// `E[psi_ck^2] = (V_k)_cc + lambda_ck^2`.
    pub fn second_moment(&self, c: usize, k: usize) -> f64 {
        let f = &self.factors[k];
        f.cov[(c, c)] + f.mean[c] * f.mean[c]
    }

    /// `E[omega_ck]` under the current `w`.
    pub fn omega_mean(&self, c: usize, k: usize) -> f64 {
        crate::stick::pg_mean_unchecked(self.stats.b[(c, k)], self.w[(c, k)])
    }

    /// Replaces the count statistics, keeping the Gaussian factors.
    pub fn with_stats(mut self, stats: StickStats) -> Result<Self> {
        if stats.n_covariates() != self.n_covariates() || stats.n_factors() != self.n_factors() {
            return Err(invalid("new count statistics do not match the posterior shape"));
        }
        self.stats = stats;
        Ok(self)
    }

    /// Drops cached summaries so they are recomputed from the raw moments.
    pub fn invalidate_cache(&mut self) {
        for f in &mut self.factors {
            f.stats = None;
        }
    }
}

fn check_shapes(hyper: &HyperParams, stats: &StickStats) -> Result<()> {
    if stats.n_covariates() != hyper.n_covariates() {
        return Err(invalid(format!(
            "count matrix has {} covariates but the kernel has {}",
            stats.n_covariates(),
            hyper.n_covariates()
        )));
    }
    if stats.n_factors() != hyper.n_factors() {
        return Err(invalid(format!(
            "count matrix has {} categories but the prior has {}",
            stats.n_factors() + 1,
            hyper.n_factors() + 1
        )));
    }
    Ok(())
}
