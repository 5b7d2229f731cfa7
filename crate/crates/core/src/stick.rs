//! Scalar building blocks: the logistic stick-breaking map, the Polya-Gamma
//! first moment and numerically stable log-space helpers.

use crate::error::{invalid, Result};

/// Below this `w` the Polya-Gamma mean switches to its Taylor expansion.
pub const PG_SERIES_THRESHOLD: f64 = 1e-4;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `log(cosh(x))`, stable for large `|x|`.
#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Maps `K-1` reals onto the `K`-simplex by breaking off `sigmoid(zeta_k)` of
/// the remaining stick at every step; the last entry is the residual.
pub fn stick_breaking_transform(zeta: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = zeta.iter().find(|z| !z.is_finite()) {
        return Err(invalid(format!("stick-breaking input must be finite, got {bad}")));
    }
    Ok(stick_breaking_unchecked(zeta))
}

pub(crate) fn stick_breaking_unchecked(zeta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(zeta.len() + 1);
    let mut remaining = 1.0;
    for &z in zeta {
        let piece = remaining * sigmoid(z);
        out.push(piece);
        remaining *= sigmoid(-z);
    }
    out.push(remaining);
    out
}

/// First moment of PG(b, w): `b / (2w) * tanh(w / 2)`.
pub fn pg_mean(b: f64, w: f64) -> Result<f64> {
    if !(b >= 0.0) || !(w >= 0.0) {
        return Err(invalid(format!("pg_mean needs b >= 0 and w >= 0, got b={b}, w={w}")));
    }
    Ok(pg_mean_unchecked(b, w))
}

#[inline]
pub(crate) fn pg_mean_unchecked(b: f64, w: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    if w < PG_SERIES_THRESHOLD {
        0.25 * b * (1.0 - w * w / 12.0)
    } else {
        b / (2.0 * w) * (0.5 * w).tanh()
    }
}

/// Logits whose stick-breaking image is the uniform distribution over `k`
/// categories: `sigmoid(zeta_j) = 1 / (k - j)`.
pub fn uniform_logits(k: usize) -> Vec<f64> {
    (0..k.saturating_sub(1)).map(|j| -((k - j - 1) as f64).ln()).collect()
}

/// Logits whose stick-breaking image has uniform *expectation* when each
/// logit carries independent Gaussian noise of variance `var`:
/// `E[sigmoid(zeta_j + eps)] = 1 / (k - j)`. With `var = 0` this is
/// [`uniform_logits`]; with large `var` the plain logits would put almost all
/// expected mass on the first few categories.
pub fn uniform_predictive_logits(k: usize, var: f64) -> Vec<f64> {
    (0..k.saturating_sub(1))
        .map(|j| {
            let target = 1.0 / (k - j) as f64;
            let (mut lo, mut hi) = (-100.0_f64, 100.0_f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if expected_sigmoid(mid, var) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// `E[sigmoid(x)]` for `x ~ N(mean, var)`, by trapezoid quadrature on the
/// standard-normal scale. The step shrinks with the standard deviation so the
/// sigmoid transition is always resolved.
pub fn expected_sigmoid(mean: f64, var: f64) -> f64 {
    if !(var > 1e-24) {
        return sigmoid(mean);
    }
    let sd = var.sqrt();
    let half_width = 8.5;
    let step = (0.25 / sd).min(0.1);
    let n = (half_width / step).ceil() as i64;
    let step = half_width / n as f64;
    let mut acc = 0.0;
    let mut weight = 0.0;
    for i in -n..=n {
        let z = i as f64 * step;
        let phi = (-0.5 * z * z).exp();
        acc += phi * sigmoid(mean + sd * z);
        weight += phi;
    }
    acc / weight
}
