use nalgebra::DMatrix;

use super::planning::{optimal_policy, policy_evaluation};
use crate::envs::{action_unit, GridGeometry, TabularMdp};
use crate::error::{invalid, Result};

const ROW_TOL: f64 = 1e-12;

/// Row-stochastic `S x A` matrix of action probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMatrix {
    pub probs: DMatrix<f64>,
}

impl PolicyMatrix {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for (s, row) in probs.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.sum() - 1.0).abs() > ROW_TOL {
                return Err(invalid(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self { probs })
    }

    /// Normalizes each row of a nonnegative matrix.
    pub fn from_weights(mut weights: DMatrix<f64>) -> Result<Self> {
        for mut row in weights.row_iter_mut() {
            let total = row.sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(invalid("policy weights must have a positive finite row sum"));
            }
            row /= total;
        }
        Self::new(weights)
    }

    pub(crate) fn from_matrix_unchecked(probs: DMatrix<f64>) -> Self {
        Self { probs }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { probs: DMatrix::from_element(n_states, n_actions, 1.0 / n_actions as f64) }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        self.probs.row(s).iter().copied().collect()
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy_action(&self, s: usize) -> usize {
        let mut best = 0;
        for a in 1..self.n_actions() {
            if self.probs[(s, a)] > self.probs[(s, best)] {
                best = a;
            }
        }
        best
    }

    pub(crate) fn set_deterministic(&mut self, s: usize, a: usize) {
        self.probs.row_mut(s).fill(0.0);
        self.probs[(s, a)] = 1.0;
    }
}

/// `pi(a|s) ∝ exp(beta Q(s, a))` with max subtraction. `beta = inf` spreads
/// the mass uniformly over the maximizers.
pub fn softmax_policy(q: &DMatrix<f64>, beta: f64) -> Result<PolicyMatrix> {
    if !(beta >= 0.0) {
        return Err(invalid(format!("softmax temperature must be nonnegative, got {beta}")));
    }
    let mut probs = DMatrix::zeros(q.nrows(), q.ncols());
    for s in 0..q.nrows() {
        let max = q.row(s).max();
        for a in 0..q.ncols() {
            probs[(s, a)] = if beta.is_infinite() {
                if q[(s, a)] == max {
                    1.0
                } else {
                    0.0
                }
            } else {
                (beta * (q[(s, a)] - max)).exp()
            };
        }
    }
    PolicyMatrix::from_weights(probs)
}

/// `(1/sqrt 2) ||sqrt p - sqrt q||_2`, clamped to `[0, 1]`.
pub fn hellinger(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let ss: f64 = p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    (ss / 2.0).sqrt().clamp(0.0, 1.0)
}

/// Row-wise Hellinger distances between two equally shaped matrices.
pub fn row_hellinger(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|r| {
            let pa: Vec<f64> = a.row(r).iter().copied().collect();
            let pb: Vec<f64> = b.row(r).iter().copied().collect();
            hellinger(&pa, &pb)
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean over states of `V*(s) - V^pi(s)` under the true MDP.
pub fn value_loss(policy: &PolicyMatrix, mdp: &TabularMdp) -> Result<f64> {
    let best = policy_evaluation(mdp, &optimal_policy(mdp)?)?;
    value_loss_against(policy, mdp, best.as_slice())
}

/// [`value_loss`] with precomputed optimal state values.
pub fn value_loss_against(policy: &PolicyMatrix, mdp: &TabularMdp, optimal_values: &[f64]) -> Result<f64> {
    let v = policy_evaluation(mdp, policy)?;
    let diffs: Vec<f64> = optimal_values.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
    Ok(mean(&diffs))
}

/// One arrow per cell: `sum_a pi(a|s) unit(a)`, with `v` pointing north.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrow {
    pub x: usize,
    pub y: usize,
    pub u: f64,
    pub v: f64,
}

pub fn arrow_field(policy: &PolicyMatrix, geometry: &GridGeometry) -> Vec<Arrow> {
    (0..policy.n_states())
        .map(|s| {
            let (x, y) = geometry.coords(s);
            let (mut u, mut v) = (0.0, 0.0);
            for a in 0..policy.n_actions() {
                let (du, dv) = action_unit(a);
                u += policy.probs[(s, a)] * du;
                v += policy.probs[(s, a)] * dv;
            }
            Arrow { x, y, u, v }
        })
        .collect()
}
