use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::streams;
use crate::agents::{
    coverage_states, generate_demonstrations, imitation_fit, optimal_policy, policy_evaluation, row_hellinger,
    softmax_policy, value_iteration, value_loss_against, DemonstrationSet, DirichletSettings, ModelKind, PgSettings,
    PolicyMatrix, VI_MAX_ITER, VI_TOL,
};
use crate::envs::{build_gridworld, GridSpec, GridWorld, RewardCell};
use crate::error::{invalid, Result};
use crate::kernels::grid_distance;
use crate::rng::SeedTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImitationParams {
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub gamma: f64,
    /// Cells paying reward 1 on arrival, placed uniformly at random.
    pub n_reward_cells: usize,
    pub expert_beta: f64,
    /// Fraction of states with demonstrations.
    pub coverage: f64,
    pub actions_per_state: usize,
    pub pg: PgSettings,
    pub dirichlet: DirichletSettings,
}

impl Default for ImitationParams {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            noise_sigma: 0.5,
            gamma: 0.95,
            n_reward_cells: 5,
            expert_beta: 5.0,
            coverage: 0.5,
            actions_per_state: 20,
            pg: theta_em_settings(),
            dirichlet: DirichletSettings::default(),
        }
    }
}

/// Length scale at the largest pairwise distance, scale learned by EM with
/// the prior mean held fixed.
pub(crate) fn theta_em_settings() -> PgSettings {
    let mut pg = PgSettings::default();
    pg.fit.em_enabled = true;
    pg.fit.em_update_mean = false;
    pg.fit.tol = 1e-4;
    pg
}

impl ImitationParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if n == 0 || self.n_reward_cells == 0 || self.n_reward_cells > n {
            return Err(invalid("need a nonempty grid and between 1 and S reward cells"));
        }
        if !(self.expert_beta >= 0.0) || !(0.0..=1.0).contains(&self.coverage) {
            return Err(invalid("expert_beta must be nonnegative and coverage in [0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) || self.actions_per_state == 0 {
            return Err(invalid("gamma must lie in (0, 1) and actions_per_state be at least 1"));
        }
        super::check_grid(self.width, self.height, self.noise_sigma)?;
        super::check_models(&self.pg, &self.dirichlet)
    }
}

/// Outcome of one policy-estimation run.
#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub world: GridWorld,
    pub expert: PolicyMatrix,
    pub estimate: PolicyMatrix,
    pub demos: DemonstrationSet,
    pub per_state_hellinger: Vec<f64>,
    pub mean_hellinger: f64,
    pub value_loss: f64,
}

impl PolicyRun {
    pub(crate) fn score(
        world: GridWorld,
        expert: PolicyMatrix,
        estimate: PolicyMatrix,
        demos: DemonstrationSet,
    ) -> Result<Self> {
        let per_state_hellinger = row_hellinger(&estimate.probs, &expert.probs);
        let mean_hellinger = crate::agents::mean(&per_state_hellinger);
        let mdp = &world.env.mdp;
        let best = policy_evaluation(mdp, &optimal_policy(mdp)?)?;
        let value_loss = value_loss_against(&estimate, mdp, best.as_slice())?;
        Ok(Self { world, expert, estimate, demos, per_state_hellinger, mean_hellinger, value_loss })
    }
}

pub fn run_imitation(params: &ImitationParams, model: ModelKind, seed: u64) -> Result<PolicyRun> {
    params.validate()?;
    let tree = SeedTree::new(seed);
    let mut env_rng = tree.stream(streams::ENV);
    let n = params.width * params.height;
    let rewards = sample(&mut env_rng, n, params.n_reward_cells)
        .into_iter()
        .map(|s| RewardCell { cell: [s % params.width, s / params.width], value: 1.0 })
        .collect();
    let spec = GridSpec {
        rewards,
        noise_sigma: params.noise_sigma,
        gamma: params.gamma,
        ..GridSpec::empty(params.width, params.height)
    };
    let world = build_gridworld(&spec)?;
    let q = value_iteration(&world.env.mdp, VI_TOL, VI_MAX_ITER).q;
    let expert = softmax_policy(&q, params.expert_beta)?;

    let mut demo_rng = tree.stream(streams::DEMOS);
    let states = coverage_states(n, params.coverage, &mut demo_rng)?;
    let demos = generate_demonstrations(&expert, &states, params.actions_per_state, &mut demo_rng)?;

    let distance = grid_distance(&world.geometry.cell_points());
    let estimate = imitation_fit(&demos, model, &distance, &params.pg, &params.dirichlet)?;
    PolicyRun::score(world, expert, estimate, demos)
}
