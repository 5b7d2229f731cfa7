use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::imitation::PolicyRun;
use super::streams;
use crate::agents::{
    coverage_states, generate_demonstrations, imitation_fit, subgoal_action_model, subgoal_gibbs_vi, DirichletSettings,
    GibbsConfig, GoalPrior, ModelKind, PgSettings, PolicyMatrix,
};
use crate::envs::{build_gridworld, GridSpec, RewardCell};
use crate::error::{invalid, Result};
use crate::kernels::grid_distance;
use crate::rng::SeedTree;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgoalEstimator {
    /// Latent goals inferred by Gibbs sampling within variational inference.
    #[default]
    Subgoal,
    /// Direct action-level estimate from the same demonstrations.
    Imitation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubgoalParams {
    pub width: usize,
    pub height: usize,
    /// Blocked edges; `None` uses [`subgoal_layout`].
    pub walls: Option<Vec<[[usize; 2]; 2]>>,
    /// Cells the expert heads for; each state targets the nearest one.
    pub goals: Vec<[usize; 2]>,
    pub noise_sigma: f64,
    pub beta_g: f64,
    pub coverage: f64,
    pub actions_per_state: usize,
    pub estimator: SubgoalEstimator,
    pub gibbs: GibbsConfig,
    pub pg: PgSettings,
    pub dirichlet: DirichletSettings,
}

impl Default for SubgoalParams {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            walls: None,
            goals: vec![[1, 1], [8, 1]],
            noise_sigma: 0.5,
            beta_g: 2.0,
            // Same demonstration protocol as the imitation scenario.
            coverage: 0.5,
            actions_per_state: 20,
            estimator: SubgoalEstimator::Subgoal,
            gibbs: GibbsConfig::default(),
            pg: super::sparse_count_settings(),
            dirichlet: DirichletSettings::default(),
        }
    }
}

/// Two rooms split by a vertical wall down the middle, joined along the
/// bottom three rows.
pub fn subgoal_layout(width: usize, height: usize) -> Vec<[[usize; 2]; 2]> {
    let mid = width / 2;
    if mid == 0 {
        return Vec::new();
    }
    (0..height.saturating_sub(3)).map(|y| [[mid - 1, y], [mid, y]]).collect()
}

impl SubgoalParams {
    pub fn validate(&self) -> Result<()> {
        super::check_grid(self.width, self.height, self.noise_sigma)?;
        if self.goals.is_empty() || self.goals.iter().any(|g| g[0] >= self.width || g[1] >= self.height) {
            return Err(invalid("subgoal scenario needs at least one expert goal inside the grid"));
        }
        if !(self.beta_g >= 0.0) || !(0.0..=1.0).contains(&self.coverage) || self.actions_per_state == 0 {
            return Err(invalid("beta_g must be nonnegative, coverage in [0, 1] and actions_per_state at least 1"));
        }
        if self.gibbs.n_samples == 0 {
            return Err(invalid("gibbs.n_samples must be at least 1"));
        }
        if let Some(walls) = &self.walls {
            crate::envs::GridGeometry::new(self.width, self.height, walls)?;
        }
        super::check_models(&self.pg, &self.dirichlet)
    }
}

pub fn run_subgoal(params: &SubgoalParams, model: ModelKind, seed: u64) -> Result<PolicyRun> {
    params.validate()?;
    let walls = params.walls.clone().unwrap_or_else(|| subgoal_layout(params.width, params.height));
    let spec = GridSpec {
        walls,
        rewards: params.goals.iter().map(|&cell| RewardCell { cell, value: 1.0 }).collect(),
        noise_sigma: params.noise_sigma,
        ..GridSpec::empty(params.width, params.height)
    };
    let world = build_gridworld(&spec)?;
    let geom = &world.geometry;
    let n = geom.n_states();

    // Goal set: every cell.
    let tables = (0..n)
        .map(|g| subgoal_action_model(geom, &world.env.physical, g, params.beta_g))
        .collect::<Result<Vec<DMatrix<f64>>>>()?;

    let goal_cells: Vec<usize> = params.goals.iter().map(|c| geom.index(c[0], c[1])).collect();
    let goal_dist: Vec<Vec<Option<u32>>> = goal_cells.iter().map(|&g| geom.bfs_distances(g)).collect();
    let mut expert = DMatrix::zeros(n, world.env.n_actions());
    for s in 0..n {
        let nearest = (0..goal_cells.len())
            .min_by_key(|&i| (goal_dist[i][s].unwrap_or(u32::MAX), i))
            .expect("nonempty goal list");
        expert.set_row(s, &tables[goal_cells[nearest]].row(s));
    }
    let expert = PolicyMatrix::from_weights(expert)?;

    let tree = SeedTree::new(seed);
    let mut demo_rng = tree.stream(streams::DEMOS);
    let states = coverage_states(n, params.coverage, &mut demo_rng)?;
    let demos = generate_demonstrations(&expert, &states, params.actions_per_state, &mut demo_rng)?;
    let distance = grid_distance(&geom.cell_points());

    let estimate = match params.estimator {
        SubgoalEstimator::Imitation => imitation_fit(&demos, model, &distance, &params.pg, &params.dirichlet)?,
        SubgoalEstimator::Subgoal => {
            let prior = match model {
                ModelKind::Pg => GoalPrior::Pg { settings: params.pg.clone(), distance },
                ModelKind::Dirichlet => GoalPrior::Dirichlet(params.dirichlet.clone()),
                ModelKind::Oracle => return Err(invalid("subgoal scenario has no oracle model")),
            };
            let mut rng = tree.stream(streams::GIBBS);
            subgoal_gibbs_vi(&demos, &tables, &prior, &params.gibbs, &mut rng)?.policy
        }
    };
    PolicyRun::score(world, expert, estimate, demos)
}
