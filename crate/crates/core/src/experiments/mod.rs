//! Scenario drivers. Each run is fully determined by its parameters, the
//! model choice and the root seed; environment and data streams do not
//! depend on the model, so PG and Dirichlet runs with the same seed see the
//! same world and the same observations.

mod brl;
mod imitation;
mod subgoal;
mod sysid;

pub use brl::{run_brl_grid10, run_brl_queueing, BrlGrid10Params, BrlQueueingParams, BrlRun};
pub use imitation::{run_imitation, ImitationParams, PolicyRun};
pub use subgoal::{run_subgoal, subgoal_layout, SubgoalEstimator, SubgoalParams};
pub use sysid::{run_sysid, SysidParams, SysidRun};

fn check_models(
    pg: &crate::agents::PgSettings,
    dirichlet: &crate::agents::DirichletSettings,
) -> crate::error::Result<()> {
    pg.validate()?;
    dirichlet.validate()
}

fn check_grid(width: usize, height: usize, noise_sigma: f64) -> crate::error::Result<()> {
    if width * height < 2 {
        return Err(crate::error::invalid("grid needs at least two cells"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(crate::error::invalid("noise_sigma must be nonnegative and finite"));
    }
    Ok(())
}

/// Fixed hyper-parameters used wherever the counts are too sparse for EM:
/// one-hot goal counts and next-state counts spread over S categories. EM
/// there drives the scale towards zero and the model back to its prior mean.
pub(crate) fn sparse_count_settings() -> crate::agents::PgSettings {
    let mut pg = crate::agents::PgSettings {
        theta: 20.0,
        lengthscale: crate::agents::Lengthscale::Value(3.0),
        prior_mean: crate::agents::PriorMean::UniformPredictive,
        ..Default::default()
    };
    pg.fit.tol = 1e-4;
    pg
}

/// Named RNG streams.
pub mod streams {
    pub const ENV: &str = "env";
    pub const DEMOS: &str = "demos";
    pub const MODEL: &str = "model";
    pub const GIBBS: &str = "gibbs";
    pub const PSRL: &str = "psrl";
}
