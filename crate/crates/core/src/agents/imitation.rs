//! Policy estimation from state-action demonstrations.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

use super::models::{fit_pg, DirichletSettings, ModelKind, PgFit, PgSettings};
use super::policy::PolicyMatrix;
use crate::baselines::dirichlet_posterior_mean;
use crate::counts::CountMatrix;
use crate::envs::sample_index;
use crate::error::{invalid, Result};
use crate::pgvi::expected_probs;

#[derive(Clone, Debug, PartialEq)]
pub struct DemonstrationSet {
    pub n_states: usize,
    pub n_actions: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl DemonstrationSet {
    pub fn new(n_states: usize, n_actions: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if n_states == 0 || n_actions < 2 {
            return Err(invalid("demonstrations need at least one state and two actions"));
        }
        if let Some(&(s, a)) = pairs.iter().find(|&&(s, a)| s >= n_states || a >= n_actions) {
            return Err(invalid(format!("demonstration ({s}, {a}) out of range")));
        }
        Ok(Self { n_states, n_actions, pairs })
    }

    /// `X[s][a]` = number of times action `a` was shown in state `s`.
    pub fn counts(&self) -> CountMatrix {
        let mut x = CountMatrix::zeros(self.n_states, self.n_actions).expect("validated shape");
        for &(s, a) in &self.pairs {
            x.increment(s, a);
        }
        x
    }

    pub fn demonstrated_states(&self) -> Vec<bool> {
        let mut seen = vec![false; self.n_states];
        for &(s, _) in &self.pairs {
            seen[s] = true;
        }
        seen
    }
}

/// A uniformly random subset of `round(fraction * n_states)` states, sorted.
pub fn coverage_states<R: Rng + ?Sized>(n_states: usize, fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid("coverage fraction must lie in [0, 1]"));
    }
    let n = (fraction * n_states as f64).round() as usize;
    let mut states = sample(rng, n_states, n).into_vec();
    states.sort_unstable();
    Ok(states)
}

/// `per_state` expert actions at each listed state.
pub fn generate_demonstrations<R: Rng + ?Sized>(
    expert: &PolicyMatrix,
    states: &[usize],
    per_state: usize,
    rng: &mut R,
) -> Result<DemonstrationSet> {
    let mut pairs = Vec::with_capacity(states.len() * per_state);
    for &s in states {
        for _ in 0..per_state {
            pairs.push((s, sample_index(expert.probs.row(s).iter().copied(), rng)));
        }
    }
    DemonstrationSet::new(expert.n_states(), expert.n_actions(), pairs)
}

/// Posterior-mean policy under the chosen model. The PG model correlates the
/// action distributions through `distance` between states.
/// The PG model behind [`imitation_fit`]: action counts per state, fitted
/// from the prior.
pub fn imitation_pg_fit(demos: &DemonstrationSet, distance: &DMatrix<f64>, pg: &PgSettings) -> Result<PgFit> {
    pg.validate()?;
    if distance.nrows() != demos.n_states {
        return Err(invalid("distance matrix does not match the state count"));
    }
    let hyper = pg.hyper(distance, demos.n_actions)?;
    fit_pg(&demos.counts(), &hyper, &pg.fit, None)
}

pub fn imitation_fit(
    demos: &DemonstrationSet,
    method: ModelKind,
    distance: &DMatrix<f64>,
    pg: &PgSettings,
    dirichlet: &DirichletSettings,
) -> Result<PolicyMatrix> {
    let x = demos.counts();
    let probs = match method {
        ModelKind::Pg => expected_probs(&imitation_pg_fit(demos, distance, pg)?.posterior),
        ModelKind::Dirichlet => dirichlet_posterior_mean(&dirichlet.model(&x)?),
        ModelKind::Oracle => return Err(invalid("imitation has no oracle model")),
    };
    PolicyMatrix::from_weights(probs)
}
