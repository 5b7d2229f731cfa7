use nalgebra::{DMatrix, DVector};

use super::{FactorStats, GaussianFactor, HyperParams, VariationalPosterior};
use crate::error::{invalid, Error, Result};
use crate::kernels::ScaledCovariance;
use crate::linalg::{cholesky_with_jitter, symmetrize};
use crate::stick::pg_mean_unchecked;

/// Sets `w_ck = sqrt((V_k)_cc + lambda_ck^2)` for every cell.
pub fn update_omega(post: &mut VariationalPosterior) {
    let c_n = post.n_covariates();
    for k in 0..post.n_factors() {
        for c in 0..c_n {
            post.w[(c, k)] = post.second_moment(c, k).max(0.0).sqrt();
        }
    }
}

/// Closed-form update of `q(psi_k)` given the current `q(omega_{.k})`:
/// `V_k = (Sigma^-1 + diag(E[omega_k]))^-1`, `lambda_k = V_k (kappa_k + Sigma^-1 mu_k)`.
pub fn update_factor(k: usize, hyper: &HyperParams, post: &mut VariationalPosterior) -> Result<()> {
    if k >= post.n_factors() {
        return Err(invalid(format!("factor index {k} out of range")));
    }
    let sigma = hyper.covariance().covariance();
    update_factor_with(k, hyper, &sigma, post, true)
}

pub(crate) fn update_factor_with(
    k: usize,
    hyper: &HyperParams,
    sigma: &DMatrix<f64>,
    post: &mut VariationalPosterior,
    full: bool,
) -> Result<()> {
    let c_n = post.n_covariates();
    let omega: Vec<f64> = (0..c_n).map(|c| pg_mean_unchecked(post.stats.b[(c, k)], post.w[(c, k)])).collect();
    let kappa = post.stats.kappa.column(k).into_owned();
    let factor = solve_factor(sigma, hyper.covariance(), &hyper.mu[k], &kappa, &omega, full)?;
    post.factors[k] = factor;
    Ok(())
}

/// Gaussian posterior of one field under diagonal Gaussian pseudo-observations
/// with precision `omega` and natural parameter `kappa`.
///
/// With `full = false` only the diagonal of the covariance is formed (the
/// off-diagonal entries are left at zero); the mean and the cached summaries
/// are exact either way.
pub(crate) fn solve_factor(
    sigma: &DMatrix<f64>,
    cov: &ScaledCovariance,
    mu: &DVector<f64>,
    kappa: &DVector<f64>,
    omega: &[f64],
    full: bool,
) -> Result<GaussianFactor> {
    let c_n = sigma.nrows();
    let theta = cov.theta;
    let active: Vec<usize> = (0..c_n).filter(|&c| omega[c] > 0.0).collect();
    let m = active.len();
    let scale: Vec<f64> = active.iter().map(|&c| omega[c].sqrt()).collect();

    // r = Sigma kappa + mu, so that lambda = (I + Sigma D)^-1 r.
    let r = sigma * kappa + mu;

    if m == 0 {
        let alpha_base = kappa * theta;
        return Ok(GaussianFactor {
            mean: r,
            cov: if full { sigma.clone() } else { DMatrix::from_diagonal(&sigma.diagonal()) },
            stats: Some(FactorStats {
                log_det: cov.log_det(),
                trace_base: theta * c_n as f64,
                alpha_base,
                mu_stamp: mu.clone(),
                lengthscale_stamp: cov.lengthscale,
                jitter_stamp: cov.jitter,
            }),
        });
    }

    let mut b = DMatrix::from_fn(m, m, |i, j| scale[i] * scale[j] * sigma[(active[i], active[j])]);
    for i in 0..m {
        b[(i, i)] += 1.0;
    }
    let chol =
        b.cholesky().ok_or_else(|| Error::Numerical("factor update: I + S Sigma S is not positive definite".into()))?;
    let l = chol.l();

    let sr = DVector::from_fn(m, |i, _| scale[i] * r[active[i]]);
    let t = chol.solve(&sr);
    let mut mean = r;
    for (i, &a) in active.iter().enumerate() {
        let coeff = scale[i] * t[i];
        if coeff != 0.0 {
            mean.axpy(-coeff, &sigma.column(a), 1.0);
        }
    }

    // W = L^-1 S Sigma_{A,.}; V = Sigma - W^T W.
    let s_sigma = DMatrix::from_fn(m, c_n, |i, j| scale[i] * sigma[(active[i], j)]);
    let w = l
        .solve_lower_triangular(&s_sigma)
        .ok_or_else(|| Error::Numerical("factor update: singular triangular factor".into()))?;
    let v = if full {
        let mut v = sigma - w.tr_mul(&w);
        symmetrize(&mut v);
        v
    } else {
        DMatrix::from_diagonal(&DVector::from_fn(c_n, |c, _| sigma[(c, c)] - w.column(c).norm_squared()))
    };

    let log_det_b: f64 = (0..m).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::Numerical("factor update: singular triangular factor".into()))?;
    let trace_b_inv = l_inv.norm_squared();
    // alpha = Sigma^-1 (lambda - mu) = kappa - D lambda.
    let alpha_base = DVector::from_fn(c_n, |c, _| theta * (kappa[c] - omega[c] * mean[c]));

    Ok(GaussianFactor {
        mean,
        cov: v,
        stats: Some(FactorStats {
            log_det: cov.log_det() - log_det_b,
            trace_base: theta * (c_n as f64 - m as f64 + trace_b_inv),
            alpha_base,
            mu_stamp: mu.clone(),
            lengthscale_stamp: cov.lengthscale,
            jitter_stamp: cov.jitter,
        }),
    })
}

/// Summaries of a factor against the current hyper-parameters.
pub(crate) struct Resolved {
    pub log_det: f64,
    pub trace_base: f64,
    /// `base^-1 (lambda_k - mu_k)` for the current `mu_k`.
    pub alpha_base: DVector<f64>,
}

pub(crate) fn resolve(factor: &GaussianFactor, mu: &DVector<f64>, cov: &ScaledCovariance) -> Result<Resolved> {
    if let Some(st) = &factor.stats {
        if st.lengthscale_stamp == cov.lengthscale && st.jitter_stamp == cov.jitter {
            let alpha_base = if &st.mu_stamp == mu {
                st.alpha_base.clone()
            } else if &factor.mean == mu {
                DVector::zeros(mu.len())
            } else {
                &st.alpha_base + cov.base_chol.solve(&(&st.mu_stamp - mu))
            };
            return Ok(Resolved { log_det: st.log_det, trace_base: st.trace_base, alpha_base });
        }
    }
    let st = fresh_stats(factor, mu, cov)?;
    Ok(Resolved { log_det: st.log_det, trace_base: st.trace_base, alpha_base: st.alpha_base })
}

/// Recomputes factor summaries directly from the moments, `O(C^3)`.
pub(crate) fn fresh_stats(factor: &GaussianFactor, mu: &DVector<f64>, cov: &ScaledCovariance) -> Result<FactorStats> {
    let chol_v = cholesky_with_jitter(&factor.cov, "variational covariance")?;
    let trace_base = cov.base_chol.solve_mat(&factor.cov).trace();
    let alpha_base = cov.base_chol.solve(&(&factor.mean - mu));
    Ok(FactorStats {
        log_det: chol_v.log_det(),
        trace_base,
        alpha_base,
        mu_stamp: mu.clone(),
        lengthscale_stamp: cov.lengthscale,
        jitter_stamp: cov.jitter,
    })
}

/// Makes every cached summary valid for `hyper`.
pub(crate) fn refresh_cache(post: &mut VariationalPosterior, hyper: &HyperParams) -> Result<()> {
    let cov = hyper.covariance();
    for (k, f) in post.factors.iter_mut().enumerate() {
        let valid =
            f.stats.as_ref().is_some_and(|st| st.lengthscale_stamp == cov.lengthscale && st.jitter_stamp == cov.jitter);
        if !valid {
            f.stats = Some(fresh_stats(f, &hyper.mu[k], cov)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::{compute_stick_stats, CountMatrix};
    use crate::kernels::{grid_distance, KernelSpec};

    fn hyper_for(points: &[(i64, i64)], theta: f64, l: f64, k: usize) -> HyperParams {
        let kernel = KernelSpec::new(theta, l, grid_distance(points)).unwrap();
        HyperParams::zero_mean(kernel, k).unwrap()
    }

    #[test]
    fn scalar_case_matches_formula() {
        let mut hyper = hyper_for(&[(0, 0)], 2.0, 1.0, 2);
        hyper.mu[0][0] = 0.3;
        let x = CountMatrix::from_rows(&[vec![3, 1]]).unwrap();
        let mut post = VariationalPosterior::from_prior(&hyper, compute_stick_stats(&x)).unwrap();
        post.w[(0, 0)] = 1.7;
        let omega = pg_mean_unchecked(4.0, 1.7);
        update_factor(0, &hyper, &mut post).unwrap();
        let v = 1.0 / (1.0 / 2.0 + omega);
        let lambda = v * (1.0 + 0.3 / 2.0);
        assert!((post.factors[0].cov[(0, 0)] - v).abs() < 1e-14);
        assert!((post.factors[0].mean[0] - lambda).abs() < 1e-14);
    }

    #[test]
    fn no_data_recovers_prior() {
        let pts = [(0, 0), (1, 0), (0, 2)];
        let mut hyper = hyper_for(&pts, 1.3, 1.5, 3);
        hyper.mu[1] = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let x = CountMatrix::zeros(3, 3).unwrap();
        let mut post = VariationalPosterior::from_prior(&hyper, compute_stick_stats(&x)).unwrap();
        for k in 0..2 {
            update_factor(k, &hyper, &mut post).unwrap();
            let sigma = hyper.covariance().covariance();
            assert!((&post.factors[k].cov - &sigma).amax() < 1e-14);
            assert!((&post.factors[k].mean - &hyper.mu[k]).amax() < 1e-14);
        }
    }

    #[test]
    fn two_covariates_match_direct_inversion() {
        // Sigma = I with two distant covariates; compare against explicit
        // (Sigma^-1 + D)^-1 computed by a brute-force inverse.
        let pts = [(0, 0), (1000, 0)];
        let mut hyper = hyper_for(&pts, 1.0, 1.0, 2);
        hyper.mu[0] = DVector::from_vec(vec![0.2, -0.4]);
        let x = CountMatrix::from_rows(&[vec![4, 2], vec![0, 5]]).unwrap();
        let mut post = VariationalPosterior::from_prior(&hyper, compute_stick_stats(&x)).unwrap();
        post.w[(0, 0)] = 0.8;
        post.w[(1, 0)] = 2.5;
        update_factor(0, &hyper, &mut post).unwrap();
        let om = [pg_mean_unchecked(6.0, 0.8), pg_mean_unchecked(5.0, 2.5)];
        let prec = DMatrix::from_row_slice(2, 2, &[1.0 + om[0], 0.0, 0.0, 1.0 + om[1]]);
        let v = prec.try_inverse().unwrap();
        let rhs = DVector::from_vec(vec![4.0 - 3.0 + 0.2, 0.0 - 2.5 - 0.4]);
        let lambda = &v * rhs;
        assert!((&post.factors[0].cov - &v).amax() < 1e-13);
        assert!((&post.factors[0].mean - &lambda).amax() < 1e-13);
    }

    #[test]
    fn correlated_update_matches_precision_form() {
        let pts = [(0, 0), (1, 0), (1, 1), (3, 2)];
        let mut hyper = hyper_for(&pts, 1.4, 1.8, 3);
        hyper.mu[1] = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.4]);
        let x = CountMatrix::from_rows(&[vec![2, 1, 0], vec![0, 0, 0], vec![1, 3, 4], vec![0, 2, 2]]).unwrap();
        let mut post = VariationalPosterior::from_prior(&hyper, compute_stick_stats(&x)).unwrap();
        for k in 0..2 {
            update_factor(k, &hyper, &mut post).unwrap();
        }
        update_omega(&mut post);
        update_factor(1, &hyper, &mut post).unwrap();
        let sigma = hyper.covariance().covariance();
        let sigma_inv = sigma.clone().try_inverse().unwrap();
        let omega = DVector::from_fn(4, |c, _| post.omega_mean(c, 1));
        let v = (&sigma_inv + DMatrix::from_diagonal(&omega)).try_inverse().unwrap();
        let kappa = post.stats.kappa.column(1).into_owned();
        let lambda = &v * (kappa + &sigma_inv * &hyper.mu[1]);
        assert!((&post.factors[1].cov - &v).amax() < 1e-12);
        assert!((&post.factors[1].mean - &lambda).amax() < 1e-12);

        // Cached summaries agree with the direct computation.
        let st = post.factors[1].stats.clone().unwrap();
        let fresh = fresh_stats(&post.factors[1], &hyper.mu[1], hyper.covariance()).unwrap();
        assert!((st.log_det - fresh.log_det).abs() < 1e-10);
        assert!((st.trace_base - fresh.trace_base).abs() < 1e-10);
        assert!((&st.alpha_base - &fresh.alpha_base).amax() < 1e-10);
    }

    #[test]
    fn omega_update_examples() {
        let hyper = hyper_for(&[(0, 0), (5, 5), (9, 9)], 1.0, 1.0, 3);
        let x = CountMatrix::zeros(3, 3).unwrap();
        let mut post = VariationalPosterior::from_prior(&hyper, compute_stick_stats(&x)).unwrap();
        post.factors[0].mean[0] = 0.0;
        post.factors[0].cov[(0, 0)] = 1.0;
        post.factors[1].mean[2] = 3.0;
        post.factors[1].cov[(2, 2)] = 0.25;
        update_omega(&mut post);
        assert_eq!(post.w[(0, 0)], 1.0);
        assert_eq!(post.w[(2, 1)], 9.25f64.sqrt());
        for k in 0..2 {
            for c in 0..3 {
                let f = &post.factors[k];
                assert_eq!(post.w[(c, k)], (f.cov[(c, c)] + f.mean[c] * f.mean[c]).sqrt());
            }
        }
    }
}
