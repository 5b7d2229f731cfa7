use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::queue::{queue_step, QueueNetSpec};
use crate::error::{invalid, Result};

/// Finite MDP with expected rewards `R(s, a)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `S x A x S` tensor, index `(s * A + a) * S + s'`.
    pub transitions: Vec<f64>,
    /// Row-major `S x A`.
    pub rewards: Vec<f64>,
    pub gamma: f64,
    pub initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self { n_states, n_actions, transitions, rewards, gamma, initial };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let (s_n, a_n) = (self.n_states, self.n_actions);
        if s_n == 0 || a_n == 0 {
            return Err(invalid("MDP needs at least one state and one action"));
        }
        if self.transitions.len() != s_n * a_n * s_n || self.rewards.len() != s_n * a_n || self.initial.len() != s_n {
            return Err(invalid("MDP table sizes do not match S and A"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!("discount must lie in (0, 1), got {}", self.gamma)));
        }
        for s in 0..s_n {
            for a in 0..a_n {
                let row = self.row(s, a);
                if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("transition row ({s}, {a}) is not a distribution")));
                }
            }
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(invalid("rewards must be finite"));
        }
        if (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid("initial distribution must sum to one"));
        }
        Ok(())
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// The parts of an environment that the learning agent knows: reward paid on
/// arrival in a physical next state, a deterministic reset map applied after
/// arrival, the discount and the start distribution.
///
/// Learned models only estimate the physical dynamics; [`MdpTemplate::assemble`]
/// turns them into a plannable MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpTemplate {
    pub n_states: usize,
    pub n_actions: usize,
    pub arrival_reward: Vec<f64>,
    /// `reset[s']` is where the agent actually ends up after arriving in `s'`.
    pub reset: Vec<usize>,
    pub gamma: f64,
    pub initial: Vec<f64>,
}

impl MdpTemplate {
    /// Builds the MDP from one `S x S` physical transition matrix per action.
    pub fn assemble(&self, physical: &[DMatrix<f64>]) -> Result<TabularMdp> {
        let (s_n, a_n) = (self.n_states, self.n_actions);
        if physical.len() != a_n || physical.iter().any(|m| m.nrows() != s_n || m.ncols() != s_n) {
            return Err(invalid("physical dynamics must be one S x S matrix per action"));
        }
        let mut transitions = vec![0.0; s_n * a_n * s_n];
        let mut rewards = vec![0.0; s_n * a_n];
        for s in 0..s_n {
            for (a, m) in physical.iter().enumerate() {
                let base = (s * a_n + a) * s_n;
                let mut r = 0.0;
                for next in 0..s_n {
                    let p = m[(s, next)];
                    if p != 0.0 {
                        transitions[base + self.reset[next]] += p;
                        r += p * self.arrival_reward[next];
                    }
                }
                rewards[s * a_n + a] = r;
            }
        }
        TabularMdp::new(s_n, a_n, transitions, rewards, self.gamma, self.initial.clone())
    }
}

/// How the true environment is stepped.
#[derive(Clone, Debug, PartialEq)]
pub enum Simulator {
    /// Sample from the physical transition table.
    Table,
    /// Run the batch queueing simulator.
    Queue(QueueNetSpec),
}

/// An environment: true physical dynamics plus the known template.
#[derive(Clone, Debug)]
pub struct Environment {
    pub physical: Vec<DMatrix<f64>>,
    pub template: MdpTemplate,
    pub mdp: TabularMdp,
    pub simulator: Simulator,
}

impl Environment {
    pub fn table(physical: Vec<DMatrix<f64>>, template: MdpTemplate) -> Result<Self> {
        let mdp = template.assemble(&physical)?;
        Ok(Self { physical, template, mdp, simulator: Simulator::Table })
    }

    pub fn n_states(&self) -> usize {
        self.template.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.template.n_actions
    }

    /// Samples a physical next state.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        match &self.simulator {
            Simulator::Table => sample_index(self.physical[a].row(s).iter().copied(), rng),
            Simulator::Queue(spec) => {
                let (next, _) = queue_step(spec, spec.state_of(s), a, rng);
                spec.index_of(next)
            }
        }
    }

    /// Where the agent actually is after arriving in physical state `next`.
    pub fn after_arrival(&self, next: usize) -> usize {
        self.template.reset[next]
    }

    /// Draws a start state from the initial distribution.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(self.template.initial.iter().copied(), rng)
    }
}

/// Inverse-CDF draw from nonnegative weights; they need not sum to one.
pub fn sample_index<R: Rng + ?Sized>(weights: impl IntoIterator<Item = f64>, rng: &mut R) -> usize {
    let weights: Vec<f64> = weights.into_iter().collect();
    let total: f64 = weights.iter().filter(|&&w| w > 0.0).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn sample_index_accepts_unnormalized_weights() {
        let mut rng = SeedTree::new(3).stream("s");
        let n = 40_000;
        let mut hits = [0usize; 3];
        for _ in 0..n {
            hits[sample_index([1.0, 0.0, 3.0], &mut rng)] += 1;
        }
        assert_eq!(hits[1], 0);
        assert!((hits[2] as f64 / n as f64 - 0.75).abs() < 0.01);
    }
}
