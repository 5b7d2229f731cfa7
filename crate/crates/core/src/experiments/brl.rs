use serde::{Deserialize, Serialize};

use super::streams;
use crate::agents::{
    psrl_loop, DirichletSettings, Lengthscale, ModelKind, PgSettings, PsrlConfig, PsrlTrace, PsrlVariant,
    TransitionModel,
};
use crate::envs::{build_grid10, build_queue_env, Environment, QueueNetSpec};
use crate::error::{invalid, Result};
use crate::kernels::grid_distance;
use crate::rng::SeedTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrlGrid10Params {
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub gamma: f64,
    pub variant: PsrlVariant,
    pub replan_every: usize,
    pub horizon: usize,
    pub m_samples: usize,
    /// Stop once the normalized return reaches this level; the trace up to
    /// that point is unchanged.
    pub stop_at: Option<f64>,
    pub pg: PgSettings,
    pub dirichlet: DirichletSettings,
}

impl Default for BrlGrid10Params {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            noise_sigma: 0.5,
            gamma: 0.95,
            variant: PsrlVariant::Sampled,
            replan_every: 50,
            horizon: 3000,
            m_samples: 10,
            stop_at: None,
            pg: super::sparse_count_settings(),
            dirichlet: DirichletSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrlQueueingParams {
    pub queue: QueueNetSpec,
    pub variant: PsrlVariant,
    pub episode_length: usize,
    pub episodes: usize,
    pub m_samples: usize,
    pub pg: PgSettings,
    pub dirichlet: DirichletSettings,
}

impl Default for BrlQueueingParams {
    fn default() -> Self {
        Self {
            queue: QueueNetSpec::default(),
            variant: PsrlVariant::Mean,
            episode_length: 20,
            episodes: 50,
            m_samples: 10,
            // Queue distances are normalized by the buffer sizes; 0.3 spans
            // about three buffer slots, like the grid's three cells.
            pg: PgSettings { lengthscale: Lengthscale::Value(0.3), ..super::sparse_count_settings() },
            dirichlet: DirichletSettings::default(),
        }
    }
}

impl BrlGrid10Params {
    fn psrl(&self) -> PsrlConfig {
        PsrlConfig {
            variant: self.variant,
            replan_every: self.replan_every,
            horizon: self.horizon,
            m_samples: self.m_samples,
            episode_length: None,
            normalize: true,
            stop_at: self.stop_at,
        }
    }

    pub fn validate(&self) -> Result<()> {
        super::check_grid(self.width, self.height, self.noise_sigma)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) || self.horizon == 0 {
            return Err(invalid("gamma must lie in (0, 1) and horizon be at least 1"));
        }
        self.psrl().validate()?;
        super::check_models(&self.pg, &self.dirichlet)
    }
}

impl BrlQueueingParams {
    fn psrl(&self) -> PsrlConfig {
        PsrlConfig {
            variant: self.variant,
            replan_every: self.episode_length,
            horizon: self.episode_length * self.episodes,
            m_samples: self.m_samples,
            episode_length: Some(self.episode_length),
            normalize: false,
            stop_at: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.queue.validate()?;
        if self.episodes == 0 {
            return Err(invalid("episodes must be at least 1"));
        }
        self.psrl().validate()?;
        super::check_models(&self.pg, &self.dirichlet)
    }
}

pub struct BrlRun {
    pub env: Environment,
    pub trace: PsrlTrace,
    pub model: TransitionModel,
}

fn make_model(
    kind: ModelKind,
    env: &Environment,
    distance: nalgebra::DMatrix<f64>,
    pg: &PgSettings,
    dirichlet: &DirichletSettings,
) -> Result<TransitionModel> {
    match kind {
        ModelKind::Pg => TransitionModel::pg(pg, &distance, env.n_actions()),
        ModelKind::Dirichlet => TransitionModel::dirichlet(dirichlet, env.n_states(), env.n_actions()),
        ModelKind::Oracle => Ok(TransitionModel::oracle(&env.physical)),
    }
}

/// PSRL on Grid10; returns are normalized by the optimal return from the
/// start corner.
pub fn run_brl_grid10(params: &BrlGrid10Params, model_kind: ModelKind, seed: u64) -> Result<BrlRun> {
    params.validate()?;
    let world = build_grid10(params.width, params.height, params.noise_sigma, params.gamma)?;
    let distance = grid_distance(&world.geometry.cell_points());
    let env = world.env;
    let mut model = make_model(model_kind, &env, distance, &params.pg, &params.dirichlet)?;
    let trace = psrl_loop(&env, &mut model, &params.psrl(), &mut SeedTree::new(seed).stream(streams::PSRL))?;
    Ok(BrlRun { env, trace, model })
}

/// PSRL on the queueing network, replanning after every episode; returns
/// are exact expected discounted returns from a uniformly random state.
pub fn run_brl_queueing(params: &BrlQueueingParams, model_kind: ModelKind, seed: u64) -> Result<BrlRun> {
    params.validate()?;
    let env = build_queue_env(&params.queue)?;
    let distance = params.queue.distance();
    let mut model = make_model(model_kind, &env, distance, &params.pg, &params.dirichlet)?;
    let trace = psrl_loop(&env, &mut model, &params.psrl(), &mut SeedTree::new(seed).stream(streams::PSRL))?;
    Ok(BrlRun { env, trace, model })
}
