use serde::{Deserialize, Serialize};

use super::streams;
use crate::agents::{mean, row_hellinger, DirichletSettings, ModelKind, PgSettings, TransitionModel};
use crate::envs::{build_grid10, mdp_to_count_covariates, random_walk, GridWorld};
use crate::error::{invalid, Result};
use crate::kernels::grid_distance;
use crate::rng::SeedTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SysidParams {
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    /// Numbers of random-walk transitions at which the models are scored.
    pub checkpoints: Vec<usize>,
    pub pg: PgSettings,
    pub dirichlet: DirichletSettings,
}

impl Default for SysidParams {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            noise_sigma: 0.5,
            checkpoints: vec![200, 500, 1000, 2000],
            pg: super::sparse_count_settings(),
            dirichlet: DirichletSettings::default(),
        }
    }
}

pub struct SysidRun {
    pub world: GridWorld,
    /// `(transitions, mean Hellinger over all state-action rows)`.
    pub checkpoints: Vec<(usize, f64)>,
    pub model: TransitionModel,
}

/// Random walk on Grid10, refitting the per-action next-state models at each
/// checkpoint and scoring them against the physical dynamics.
impl SysidParams {
    pub fn validate(&self) -> Result<()> {
        super::check_grid(self.width, self.height, self.noise_sigma)?;
        if self.checkpoints.is_empty() || self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("checkpoints must be nonempty and strictly increasing"));
        }
        super::check_models(&self.pg, &self.dirichlet)
    }
}

pub fn run_sysid(params: &SysidParams, model_kind: ModelKind, seed: u64) -> Result<SysidRun> {
    params.validate()?;
    let world = build_grid10(params.width, params.height, params.noise_sigma, 0.95)?;
    let env = &world.env;
    let (s_n, a_n) = (env.n_states(), env.n_actions());
    let tree = SeedTree::new(seed);
    let walk = random_walk(env, *params.checkpoints.last().expect("nonempty"), &mut tree.stream(streams::ENV));

    let mut model = match model_kind {
        ModelKind::Pg => TransitionModel::pg(&params.pg, &grid_distance(&world.geometry.cell_points()), a_n)?,
        ModelKind::Dirichlet => TransitionModel::dirichlet(&params.dirichlet, s_n, a_n)?,
        ModelKind::Oracle => TransitionModel::oracle(&env.physical),
    };
    let mut checkpoints = Vec::with_capacity(params.checkpoints.len());
    for &t in &params.checkpoints {
        let counts = mdp_to_count_covariates(&walk[..t], s_n, a_n)?;
        model.update(&counts)?;
        let predicted = model.mean();
        let mut distances = Vec::with_capacity(s_n * a_n);
        for (p, truth) in predicted.iter().zip(&env.physical) {
            distances.extend(row_hellinger(p, truth));
        }
        checkpoints.push((t, mean(&distances)));
    }
    Ok(SysidRun { world, checkpoints, model })
}
