//! Two-server batch queueing network.
//!
//! Packets arrive at queue 1, are moved to queue 2 in batches when the agent
//! serves queue 1 (action 0) and leave the system in batches when it serves
//! queue 2 (action 1).

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mdp::{Environment, MdpTemplate, Simulator};
use crate::error::{validation, Result};
use crate::kernels::queue_distance;

/// How the batch moved from queue 1 to queue 2 is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueVariant {
    /// The raw batch size enters queue 2 even when queue 1 held fewer packets.
    #[default]
    Literal,
    /// Only packets actually present in queue 1 are moved.
    Conserving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueueNetSpec {
    pub buffers: [usize; 2],
    pub arrival_rate: f64,
    pub batch_means: [f64; 2],
    pub variant: QueueVariant,
    pub gamma: f64,
}

impl Default for QueueNetSpec {
    fn default() -> Self {
        Self {
            buffers: [10, 10],
            arrival_rate: 1.0,
            batch_means: [3.0, 2.0],
            variant: QueueVariant::Literal,
            gamma: 0.95,
        }
    }
}

pub const N_QUEUE_ACTIONS: usize = 2;

impl QueueNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.buffers.iter().any(|&b| b == 0) {
            return Err(validation("queue buffers must be positive"));
        }
        let rates = [self.arrival_rate, self.batch_means[0], self.batch_means[1]];
        if rates.iter().any(|&r| !(r > 0.0 && r <= 10.0)) {
            return Err(validation("queue rates must lie in (0, 10]"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(validation("gamma must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        (self.buffers[0] + 1) * (self.buffers[1] + 1)
    }

    #[inline]
    pub fn index_of(&self, b: [usize; 2]) -> usize {
        b[0] * (self.buffers[1] + 1) + b[1]
    }

    #[inline]
    pub fn state_of(&self, s: usize) -> [usize; 2] {
        [s / (self.buffers[1] + 1), s % (self.buffers[1] + 1)]
    }

    pub fn states(&self) -> Vec<[usize; 2]> {
        (0..self.n_states()).map(|s| self.state_of(s)).collect()
    }

    /// Buffer-normalized Euclidean distances between all queue states.
    pub fn distance(&self) -> DMatrix<f64> {
        queue_distance(&self.states(), self.buffers)
    }

    fn rates(&self, a: usize) -> [f64; 3] {
        [
            self.arrival_rate,
            if a == 0 { self.batch_means[0] } else { 0.0 },
            if a == 1 { self.batch_means[1] } else { 0.0 },
        ]
    }

    fn transition(&self, b: [usize; 2], q: [u64; 3]) -> [usize; 2] {
        let clamp = |v: i64, cap: usize| v.clamp(0, cap as i64) as usize;
        let (b1, b2) = (b[0] as i64, b[1] as i64);
        let (q1, q2, q3) = (q[0] as i64, q[1] as i64, q[2] as i64);
        let moved = match self.variant {
            QueueVariant::Literal => q2,
            QueueVariant::Conserving => q2.min(b1 + q1),
        };
        [clamp(b1 + q1 - moved, self.buffers[0]), clamp(b2 + moved - q3, self.buffers[1])]
    }
}

/// `-(b1 + b2)`, charged on the state reached after a step.
pub fn queue_reward(b: [usize; 2]) -> f64 {
    -((b[0] + b[1]) as f64)
}

/// Poisson draw by sequential inversion of the CDF.
pub fn poisson_inversion<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-rate).exp();
    let mut cdf = p;
    while u >= cdf && p > 0.0 {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
    }
    k
}

/// One simulator step. Action 0 serves queue 1, action 1 serves queue 2.
pub fn queue_step<R: Rng + ?Sized>(spec: &QueueNetSpec, b: [usize; 2], a: usize, rng: &mut R) -> ([usize; 2], f64) {
    let rates = spec.rates(a);
    let q = [poisson_inversion(rates[0], rng), poisson_inversion(rates[1], rng), poisson_inversion(rates[2], rng)];
    let next = spec.transition(b, q);
    (next, queue_reward(next))
}

const TAIL_MASS: f64 = 1e-12;

/// Poisson pmf up to cumulative mass `1 - 1e-12`.
fn truncated_pmf(rate: f64) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0];
    }
    let mut pmf = vec![(-rate).exp()];
    let mut cdf = pmf[0];
    while cdf < 1.0 - TAIL_MASS {
        let k = pmf.len() as f64;
        let p = pmf[pmf.len() - 1] * rate / k;
        pmf.push(p);
        cdf += p;
    }
    pmf
}

/// Exact next-state distribution by summing over all batch-size triples.
/// Test oracle and ground truth for evaluation; learners never see it.
pub fn queue_exact_row(spec: &QueueNetSpec, b: [usize; 2], a: usize) -> Vec<f64> {
    let rates = spec.rates(a);
    let pmfs = rates.map(truncated_pmf);
    let mut row = vec![0.0; spec.n_states()];
    for (q1, p1) in pmfs[0].iter().enumerate() {
        for (q2, p2) in pmfs[1].iter().enumerate() {
            let p12 = p1 * p2;
            for (q3, p3) in pmfs[2].iter().enumerate() {
                let next = spec.transition(b, [q1 as u64, q2 as u64, q3 as u64]);
                row[spec.index_of(next)] += p12 * p3;
            }
        }
    }
    // Return the truncated tail mass so rows are exactly stochastic.
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p /= total;
    }
    row
}

/// The queueing network as an environment; the physical tables are built
/// from [`queue_exact_row`] and stepping uses the simulator.
pub fn build_queue_env(spec: &QueueNetSpec) -> Result<Environment> {
    spec.validate()?;
    let n = spec.n_states();
    let physical = (0..N_QUEUE_ACTIONS)
        .map(|a| {
            let mut m = DMatrix::zeros(n, n);
            for s in 0..n {
                for (next, p) in queue_exact_row(spec, spec.state_of(s), a).into_iter().enumerate() {
                    m[(s, next)] = p;
                }
            }
            m
        })
        .collect();
    let template = MdpTemplate {
        n_states: n,
        n_actions: N_QUEUE_ACTIONS,
        arrival_reward: (0..n).map(|s| queue_reward(spec.state_of(s))).collect(),
        reset: (0..n).collect(),
        gamma: spec.gamma,
        initial: vec![1.0 / n as f64; n],
    };
    let mut env = Environment::table(physical, template)?;
    env.simulator = Simulator::Queue(spec.clone());
    Ok(env)
}
