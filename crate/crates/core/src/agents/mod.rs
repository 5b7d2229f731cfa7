//! Planning, policy metrics and the learning agents built on the count models.

mod imitation;
mod models;
mod planning;
mod policy;
mod psrl;
mod subgoal;

pub use imitation::{coverage_states, generate_demonstrations, imitation_fit, imitation_pg_fit, DemonstrationSet};
pub use models::{
    fit_pg, DirichletSettings, Lengthscale, LengthscaleRule, ModelKind, PgFit, PgSettings, PriorMean, TransitionModel,
    TransitionSampler,
};
pub use planning::{
    expected_return, greedy_policy, optimal_policy, policy_evaluation, value_iteration, ValueIteration, VI_MAX_ITER,
    VI_TOL,
};
pub use policy::{
    arrow_field, hellinger, mean, row_hellinger, softmax_policy, value_loss, value_loss_against, Arrow, PolicyMatrix,
};
pub use psrl::{psrl_loop, psrl_step_mean, psrl_step_sampled, PsrlConfig, PsrlTrace, PsrlVariant};
pub use subgoal::{subgoal_action_model, subgoal_gibbs_vi, GibbsConfig, GoalPrior, SubgoalResult};
