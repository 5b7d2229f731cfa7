//! Correlated multinomial models for tabular decision making.
//!
//! The core is a variational-inference engine for the logistic
//! stick-breaking multinomial model with a Gaussian-process-style prior over
//! a finite covariate space ([`pgvi`]). Around it sit the independent
//! Dirichlet baseline ([`baselines`]), tabular environments ([`envs`]),
//! planning and learning procedures ([`agents`]) and the experiment drivers
//! that compare the two models ([`experiments`]).

pub mod agents;
pub mod baselines;
pub mod checkpoint;
pub mod counts;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod pgvi;
pub mod rng;
pub mod stick;

pub use counts::{compute_stick_stats, CountMatrix, StickStats};
pub use error::{Error, Result};
pub use kernels::{build_covariance, grid_distance, queue_distance, KernelParam, KernelSpec};
pub use pgvi::{FitOptions, FitResult, HyperParams, VariationalPosterior};
pub use stick::{pg_mean, stick_breaking_transform};
