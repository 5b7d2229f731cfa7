//! Tabular environments and trajectory bookkeeping.

mod grid;
mod mdp;
mod queue;

pub use grid::{
    action_unit, build_grid10, build_gridworld, GridGeometry, GridSpec, GridWorld, ResetRule, RewardCell, ACTION_NAMES,
    MOVES,
};
pub use mdp::{sample_index, Environment, MdpTemplate, Simulator, TabularMdp};
pub use queue::{
    build_queue_env, poisson_inversion, queue_exact_row, queue_reward, queue_step, QueueNetSpec, QueueVariant,
    N_QUEUE_ACTIONS,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counts::CountMatrix;
use crate::error::{invalid, Result};

/// One observed physical transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

/// One `S x S` count matrix per action: `X[a][i][j]` counts `i -> j` under `a`.
pub fn mdp_to_count_covariates(
    trajectory: &[Transition],
    n_states: usize,
    n_actions: usize,
) -> Result<Vec<CountMatrix>> {
    let mut counts = (0..n_actions).map(|_| CountMatrix::zeros(n_states, n_states)).collect::<Result<Vec<_>>>()?;
    for t in trajectory {
        add_transition(&mut counts, t)?;
    }
    Ok(counts)
}

pub fn add_transition(counts: &mut [CountMatrix], t: &Transition) -> Result<()> {
    let n_states = counts.first().map_or(0, CountMatrix::n_covariates);
    if t.action >= counts.len() || t.state >= n_states || t.next >= n_states {
        return Err(invalid(format!("transition {t:?} out of range")));
    }
    counts[t.action].increment(t.state, t.next);
    Ok(())
}

/// Uniform random walk from a start-distribution draw; arrivals are recorded
/// physically and then passed through the reset map.
pub fn random_walk<R: Rng + ?Sized>(env: &Environment, steps: usize, rng: &mut R) -> Vec<Transition> {
    let mut out = Vec::with_capacity(steps);
    let mut s = env.sample_start(rng);
    for _ in 0..steps {
        let action = rng.random_range(0..env.n_actions());
        let next = env.sample_next(s, action, rng);
        out.push(Transition { state: s, action, next });
        s = env.after_arrival(next);
    }
    out
}
