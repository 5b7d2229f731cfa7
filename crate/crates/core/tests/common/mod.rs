#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pgdm::counts::CountMatrix;
use pgdm::kernels::KernelSpec;
use pgdm::pgvi::HyperParams;
use rand::Rng;

/// A random small model: covariates at random points in a 4x4 box, random
/// counts, scale and length scale, and random prior means.
pub struct Instance {
    pub counts: CountMatrix,
    pub hyper: HyperParams,
}

pub fn random_instance<R: Rng>(rng: &mut R, max_c: usize, max_k: usize, max_count: u64) -> Instance {
    let c = rng.random_range(1..=max_c);
    let k = rng.random_range(2..=max_k);
    let pts: Vec<(f64, f64)> = (0..c).map(|_| (rng.random_range(0.0..4.0), rng.random_range(0.0..4.0))).collect();
    let distance =
        DMatrix::from_fn(c, c, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt());
    let theta = rng.random_range(0.2..3.0);
    let l = rng.random_range(0.4..3.0);
    let kernel = KernelSpec::new(theta, l, distance).unwrap();
    let mu = (0..k - 1).map(|_| DVector::from_fn(c, |_, _| rng.random_range(-1.5..1.5))).collect();
    let hyper = HyperParams::new(mu, kernel).unwrap();
    let rows: Vec<Vec<u64>> = (0..c)
        .map(|_| {
            // Some empty rows, some sparse ones, some full ones.
            let density: f64 = rng.random();
            (0..k).map(|_| if rng.random::<f64>() < density { rng.random_range(0..=max_count) } else { 0 }).collect()
        })
        .collect();
    Instance { counts: CountMatrix::from_rows(&rows).unwrap(), hyper }
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn ln_binom(n: u64, x: u64) -> f64 {
    (1..=x).map(|i| ((n - x + i) as f64 / i as f64).ln()).sum()
}

/// Log evidence and posterior mean of `sigmoid(psi)` for one binomial
/// observation `x` of `n` under `psi ~ N(mu, var)`, by trapezoid quadrature
/// on a fine grid.
pub fn binomial_oracle(mu: f64, var: f64, n: u64, x: u64) -> (f64, f64) {
    let sd = var.sqrt();
    let (lo, hi) = (mu - 14.0 * sd - 40.0, mu + 14.0 * sd + 40.0);
    let steps = 400_000;
    let h = (hi - lo) / steps as f64;
    let mut log_z = f64::NEG_INFINITY;
    let mut log_m = f64::NEG_INFINITY;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    for i in 0..=steps {
        let psi = lo + i as f64 * h;
        let w: f64 = if i == 0 || i == steps { 0.5 } else { 1.0 };
        let log_sig = -(-psi).exp().ln_1p();
        let log_sig_neg = -psi.exp().ln_1p();
        let log_sig = if log_sig.is_finite() { log_sig } else { psi };
        let log_sig_neg = if log_sig_neg.is_finite() { log_sig_neg } else { -psi };
        let lp = w.ln() + h.ln() + log_norm - 0.5 * (psi - mu).powi(2) / var
            + x as f64 * log_sig
            + (n - x) as f64 * log_sig_neg;
        log_z = log_add(log_z, lp);
        log_m = log_add(log_m, lp + log_sig);
    }
    (log_z + ln_binom(n, x), (log_m - log_z).exp())
}
