//! Exact tabular planning: value iteration, policy evaluation and greedy
//! policy extraction.

use nalgebra::{DMatrix, DVector};

use super::policy::PolicyMatrix;
use crate::envs::TabularMdp;
use crate::error::{invalid, Error, Result};

pub const VI_TOL: f64 = 1e-8;
pub const VI_MAX_ITER: usize = 10_000;

#[derive(Clone, Debug)]
pub struct ValueIteration {
    /// `S x A` action values.
    pub q: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn backup(mdp: &TabularMdp, v: &[f64], q: &mut DMatrix<f64>) {
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.row(s, a);
            let ev: f64 = row.iter().zip(v).map(|(p, v)| p * v).sum();
            q[(s, a)] = mdp.reward(s, a) + mdp.gamma * ev;
        }
    }
}

fn state_values(q: &DMatrix<f64>) -> Vec<f64> {
    q.row_iter().map(|r| r.max()).collect()
}

/// Iterates the Bellman optimality operator from `Q = 0` until the sup-norm
/// change drops below `tol`. Non-convergence is reported, not an error.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iter: usize) -> ValueIteration {
    let mut q = DMatrix::zeros(mdp.n_states, mdp.n_actions);
    let mut next = q.clone();
    let mut v = vec![0.0; mdp.n_states];
    for it in 1..=max_iter {
        backup(mdp, &v, &mut next);
        let residual = (&next - &q).amax();
        std::mem::swap(&mut q, &mut next);
        if residual < tol {
            return ValueIteration { q, iterations: it, converged: true };
        }
        v = state_values(&q);
    }
    ValueIteration { q, iterations: max_iter, converged: false }
}

/// Deterministic greedy policy; ties go to the lowest action index.
pub fn greedy_policy(q: &DMatrix<f64>) -> PolicyMatrix {
    let mut probs = DMatrix::zeros(q.nrows(), q.ncols());
    for s in 0..q.nrows() {
        probs[(s, argmax(q.row(s).iter().copied()))] = 1.0;
    }
    PolicyMatrix::from_matrix_unchecked(probs)
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// `V^pi` from the linear system `(I - gamma P_pi) V = R_pi`.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &PolicyMatrix) -> Result<DVector<f64>> {
    let (s_n, a_n) = (mdp.n_states, mdp.n_actions);
    if policy.n_states() != s_n || policy.n_actions() != a_n {
        return Err(invalid("policy shape does not match the MDP"));
    }
    let mut system = DMatrix::identity(s_n, s_n);
    let mut rhs = DVector::zeros(s_n);
    for s in 0..s_n {
        for a in 0..a_n {
            let pi = policy.probs[(s, a)];
            if pi == 0.0 {
                continue;
            }
            rhs[s] += pi * mdp.reward(s, a);
            for (next, p) in mdp.row(s, a).iter().enumerate() {
                system[(s, next)] -= mdp.gamma * pi * p;
            }
        }
    }
    system.lu().solve(&rhs).ok_or_else(|| Error::Numerical("policy evaluation system is singular".into()))
}

/// Expected discounted return from the MDP's initial distribution.
pub fn expected_return(mdp: &TabularMdp, policy: &PolicyMatrix) -> Result<f64> {
    let v = policy_evaluation(mdp, policy)?;
    Ok(mdp.initial.iter().zip(v.iter()).map(|(p, v)| p * v).sum())
}

/// An exactly optimal deterministic policy: value iteration followed by
/// policy-iteration polishing so that near-ties cannot leave it suboptimal.
pub fn optimal_policy(mdp: &TabularMdp) -> Result<PolicyMatrix> {
    let vi = value_iteration(mdp, VI_TOL, VI_MAX_ITER);
    let mut policy = greedy_policy(&vi.q);
    let mut q = DMatrix::zeros(mdp.n_states, mdp.n_actions);
    for _ in 0..100 {
        let v = policy_evaluation(mdp, &policy)?;
        backup(mdp, v.as_slice(), &mut q);
        let mut changed = false;
        for s in 0..mdp.n_states {
            let current = policy.greedy_action(s);
            let best = argmax(q.row(s).iter().copied());
            // Switch only on a real improvement to avoid cycling on ties.
            if q[(s, best)] > q[(s, current)] + 1e-12 * (1.0 + q[(s, current)].abs()) {
                policy.set_deterministic(s, best);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(policy)
}
