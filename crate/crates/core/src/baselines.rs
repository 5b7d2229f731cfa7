//! Independent Dirichlet model: one conjugate Dirichlet per covariate, no
//! sharing of information between covariates.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::counts::CountMatrix;
use crate::error::{invalid, Result};

#[derive(Clone, Debug)]
pub struct DirichletModel {
    /// `C x K` concentration parameters.
    pub alpha: DMatrix<f64>,
    pub counts: CountMatrix,
}

impl DirichletModel {
    pub fn new(alpha: DMatrix<f64>, counts: CountMatrix) -> Result<Self> {
        if alpha.nrows() != counts.n_covariates() || alpha.ncols() != counts.n_categories() {
            return Err(invalid("concentration shape does not match the count matrix"));
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(invalid("Dirichlet concentrations must be positive and finite"));
        }
        Ok(Self { alpha, counts })
    }

    /// Flat prior, all concentrations equal to one.
    pub fn flat(counts: CountMatrix) -> Self {
        let alpha = DMatrix::from_element(counts.n_covariates(), counts.n_categories(), 1.0);
        Self { alpha, counts }
    }

    fn posterior_alpha(&self, c: usize, k: usize) -> f64 {
        self.alpha[(c, k)] + self.counts.get(c, k) as f64
    }
}

/// Row `c` is `(x_c + alpha_c) / (N_c + sum_j alpha_cj)`.
pub fn dirichlet_posterior_mean(model: &DirichletModel) -> DMatrix<f64> {
    let (c_n, k_n) = (model.alpha.nrows(), model.alpha.ncols());
    let mut out = DMatrix::zeros(c_n, k_n);
    for c in 0..c_n {
        let total: f64 = (0..k_n).map(|k| model.posterior_alpha(c, k)).sum();
        for k in 0..k_n {
            out[(c, k)] = model.posterior_alpha(c, k) / total;
        }
    }
    out
}

/// One posterior draw per row via normalized Gamma variates.
pub fn dirichlet_posterior_sample<R: Rng + ?Sized>(model: &DirichletModel, rng: &mut R) -> DMatrix<f64> {
    let (c_n, k_n) = (model.alpha.nrows(), model.alpha.ncols());
    let mut out = DMatrix::zeros(c_n, k_n);
    for c in 0..c_n {
        let mut total = 0.0;
        for k in 0..k_n {
            let g = Gamma::new(model.posterior_alpha(c, k), 1.0).expect("positive shape").sample(rng);
            out[(c, k)] = g;
            total += g;
        }
        if total > 0.0 {
            for k in 0..k_n {
                out[(c, k)] /= total;
            }
        } else {
            // Every variate underflowed; fall back to the mean.
            let mean = dirichlet_posterior_mean(model);
            out.set_row(c, &mean.row(c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn model(rows: &[Vec<u64>]) -> DirichletModel {
        DirichletModel::flat(CountMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn posterior_mean_examples() {
        let m = dirichlet_posterior_mean(&model(&[vec![0, 0], vec![3, 1]]));
        assert_eq!(m[(0, 0)], 0.5);
        assert_eq!(m[(0, 1)], 0.5);
        assert!((m[(1, 0)] - 4.0 / 6.0).abs() < 1e-15);
        assert!((m[(1, 1)] - 2.0 / 6.0).abs() < 1e-15);
        let u = dirichlet_posterior_mean(&model(&[vec![0, 0, 0, 0]]));
        assert!(u.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn extra_observation_raises_its_category() {
        let base = model(&[vec![2, 5, 1]]);
        let before = dirichlet_posterior_mean(&base);
        for j in 0..3 {
            let mut counts = base.counts.clone();
            counts.increment(0, j);
            let after = dirichlet_posterior_mean(&DirichletModel::flat(counts));
            assert!(after[(0, j)] > before[(0, j)]);
            assert!((after.row(0).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn concentrated_prior_pins_the_sample() {
        let counts = CountMatrix::zeros(1, 2).unwrap();
        let m = DirichletModel::new(DMatrix::from_element(1, 2, 1e6), counts).unwrap();
        let mut rng = SeedTree::new(1).stream("d");
        let s = dirichlet_posterior_sample(&m, &mut rng);
        assert!((s[(0, 0)] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn sampling_is_reproducible_and_unbiased() {
        let m = model(&[vec![3, 0, 1], vec![0, 0, 0]]);
        let tree = SeedTree::new(9);
        assert_eq!(
            dirichlet_posterior_sample(&m, &mut tree.stream("a")),
            dirichlet_posterior_sample(&m, &mut tree.stream("a"))
        );
        let mut rng = tree.stream("mc");
        let n = 100_000;
        let mut acc = DMatrix::zeros(2, 3);
        for _ in 0..n {
            acc += dirichlet_posterior_sample(&m, &mut rng);
        }
        acc /= n as f64;
        assert!((acc - dirichlet_posterior_mean(&m)).amax() < 0.005);
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        let counts = CountMatrix::zeros(1, 2).unwrap();
        assert!(DirichletModel::new(DMatrix::from_element(1, 2, 0.0), counts).is_err());
    }
}
