//! Model settings shared by the agents, and per-action transition models.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{dirichlet_posterior_mean, dirichlet_posterior_sample, DirichletModel};
use crate::checkpoint::Checkpoint;
use crate::counts::CountMatrix;
use crate::error::{invalid, Result};
use crate::kernels::{max_distance, KernelSpec};
use crate::pgvi::{expected_probs, fit, fit_warm, FitOptions, HyperParams, PosteriorSampler, VariationalPosterior};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pg,
    Dirichlet,
    /// The true dynamics, for reference runs.
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthscaleRule {
    MaxDistance,
}

/// Either a fixed length scale or a rule applied to the distance matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lengthscale {
    Value(f64),
    Rule(LengthscaleRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMean {
    /// Means whose stick-breaking image is the uniform distribution.
    Uniform,
    /// Means whose expected stick-breaking image, under the prior variance,
    /// is the uniform distribution.
    UniformPredictive,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgSettings {
    pub theta: f64,
    pub lengthscale: Lengthscale,
    pub prior_mean: PriorMean,
    pub fit: FitOptions,
}

impl Default for PgSettings {
    fn default() -> Self {
        Self {
            theta: 1.0,
            lengthscale: Lengthscale::Rule(LengthscaleRule::MaxDistance),
            prior_mean: PriorMean::Uniform,
            fit: FitOptions::default(),
        }
    }
}

impl PgSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(invalid("theta must be positive and finite"));
        }
        if let Lengthscale::Value(l) = self.lengthscale {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("lengthscale must be positive and finite"));
            }
        }
        if self.fit.max_sweeps == 0 || !(self.fit.tol >= 0.0) {
            return Err(invalid("fit needs max_sweeps >= 1 and a nonnegative tolerance"));
        }
        Ok(())
    }

    pub fn kernel(&self, distance: &DMatrix<f64>) -> Result<KernelSpec> {
        let l = match self.lengthscale {
            Lengthscale::Value(l) => l,
            Lengthscale::Rule(LengthscaleRule::MaxDistance) => max_distance(distance),
        };
        // A single covariate has no distances; any length scale will do.
        let l = if l > 0.0 { l } else { 1.0 };
        KernelSpec::new(self.theta, l, distance.clone())
    }

    pub fn hyper(&self, distance: &DMatrix<f64>, n_categories: usize) -> Result<HyperParams> {
        let kernel = self.kernel(distance)?;
        match self.prior_mean {
            PriorMean::Uniform => HyperParams::uniform_centered(kernel, n_categories),
            PriorMean::UniformPredictive => HyperParams::uniform_predictive(kernel, n_categories),
            PriorMean::Zero => HyperParams::zero_mean(kernel, n_categories),
        }
    }
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletSettings {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for DirichletSettings {
    fn default() -> Self {
        Self { alpha: default_alpha() }
    }
}

impl DirichletSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("dirichlet alpha must be positive and finite"));
        }
        Ok(())
    }

    pub fn model(&self, counts: &CountMatrix) -> Result<DirichletModel> {
        let alpha = DMatrix::from_element(counts.n_covariates(), counts.n_categories(), self.alpha);
        DirichletModel::new(alpha, counts.clone())
    }
}

/// A fitted PG model for one count matrix.
#[derive(Clone, Debug)]
pub struct PgFit {
    pub hyper: HyperParams,
    pub posterior: VariationalPosterior,
    pub elbo_trace: Vec<f64>,
}

impl PgFit {
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let counts = self.posterior.stats.counts()?;
        Ok(Checkpoint::new(&self.hyper, &self.posterior, &counts, &self.elbo_trace))
    }
}

/// Fits from the prior, or warm-starts from `previous`.
pub fn fit_pg(counts: &CountMatrix, hyper: &HyperParams, opts: &FitOptions, previous: Option<&PgFit>) -> Result<PgFit> {
    let result = match previous {
        Some(prev) => fit_warm(counts, prev.hyper.clone(), prev.posterior.clone(), opts)?,
        None => fit(counts, hyper.clone(), opts)?,
    };
    Ok(PgFit { hyper: result.hyper, posterior: result.posterior, elbo_trace: result.elbo_trace })
}

enum ActionState {
    Pg { hyper: HyperParams, fit: Option<PgFit> },
    Dirichlet { model: DirichletModel },
    Oracle { truth: DMatrix<f64> },
}

/// One next-state model per action over a shared state space.
pub struct TransitionModel {
    actions: Vec<ActionState>,
    pg_fit: FitOptions,
    dirichlet: DirichletSettings,
}

/// Posterior draws for all actions at once.
pub enum TransitionSampler<'a> {
    Pg(Vec<PosteriorSampler>),
    Dirichlet(Vec<&'a DirichletModel>),
    Oracle(Vec<&'a DMatrix<f64>>),
}

impl TransitionSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<DMatrix<f64>> {
        match self {
            Self::Pg(s) => s.iter().map(|s| s.sample(rng)).collect(),
            Self::Dirichlet(m) => m.iter().map(|m| dirichlet_posterior_sample(m, rng)).collect(),
            Self::Oracle(t) => t.iter().map(|&t| t.clone()).collect(),
        }
    }
}

impl TransitionModel {
    pub fn pg(settings: &PgSettings, distance: &DMatrix<f64>, n_actions: usize) -> Result<Self> {
        settings.validate()?;
        let n = distance.nrows();
        let hyper = settings.hyper(distance, n)?;
        let actions = (0..n_actions).map(|_| ActionState::Pg { hyper: hyper.clone(), fit: None }).collect();
        let mut model = Self { actions, pg_fit: settings.fit.clone(), dirichlet: DirichletSettings::default() };
        model.update(&vec![CountMatrix::zeros(n, n)?; n_actions])?;
        Ok(model)
    }

    pub fn dirichlet(settings: &DirichletSettings, n_states: usize, n_actions: usize) -> Result<Self> {
        let empty = CountMatrix::zeros(n_states, n_states)?;
        let actions = (0..n_actions)
            .map(|_| settings.model(&empty).map(|model| ActionState::Dirichlet { model }))
            .collect::<Result<_>>()?;
        Ok(Self { actions, pg_fit: FitOptions::default(), dirichlet: settings.clone() })
    }

    pub fn oracle(physical: &[DMatrix<f64>]) -> Self {
        let actions = physical.iter().map(|t| ActionState::Oracle { truth: t.clone() }).collect();
        Self { actions, pg_fit: FitOptions::default(), dirichlet: DirichletSettings::default() }
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Refits every action model on its cumulative counts. PG fits
    /// warm-start from the previous posterior.
    pub fn update(&mut self, counts: &[CountMatrix]) -> Result<()> {
        if counts.len() != self.actions.len() {
            return Err(invalid("need one count matrix per action"));
        }
        for (state, x) in self.actions.iter_mut().zip(counts) {
            match state {
                ActionState::Pg { hyper, fit } => {
                    *fit = Some(fit_pg(x, hyper, &self.pg_fit, fit.as_ref())?);
                }
                ActionState::Dirichlet { model } => *model = self.dirichlet.model(x)?,
                ActionState::Oracle { .. } => {}
            }
        }
        Ok(())
    }

    /// Posterior-mean next-state matrices, one per action.
    pub fn mean(&self) -> Vec<DMatrix<f64>> {
        self.actions
            .iter()
            .map(|state| match state {
                ActionState::Pg { fit, .. } => expected_probs(&fit.as_ref().expect("fitted at construction").posterior),
                ActionState::Dirichlet { model } => dirichlet_posterior_mean(model),
                ActionState::Oracle { truth } => truth.clone(),
            })
            .collect()
    }

    pub fn sampler(&self) -> Result<TransitionSampler<'_>> {
        Ok(match self.actions.first() {
            Some(ActionState::Pg { .. }) => TransitionSampler::Pg(
                self.actions
                    .iter()
                    .map(|s| match s {
                        ActionState::Pg { fit, .. } => {
                            PosteriorSampler::new(&fit.as_ref().expect("fitted at construction").posterior)
                        }
                        _ => unreachable!("all actions share one model kind"),
                    })
                    .collect::<Result<_>>()?,
            ),
            Some(ActionState::Dirichlet { .. }) => TransitionSampler::Dirichlet(
                self.actions
                    .iter()
                    .map(|s| match s {
                        ActionState::Dirichlet { model } => model,
                        _ => unreachable!("all actions share one model kind"),
                    })
                    .collect(),
            ),
            _ => TransitionSampler::Oracle(
                self.actions
                    .iter()
                    .map(|s| match s {
                        ActionState::Oracle { truth } => truth,
                        _ => unreachable!("all actions share one model kind"),
                    })
                    .collect(),
            ),
        })
    }

    /// The fitted PG models, if this is a PG model.
    pub fn pg_fits(&self) -> Vec<&PgFit> {
        self.actions
            .iter()
            .filter_map(|s| match s {
                ActionState::Pg { fit, .. } => fit.as_ref(),
                _ => None,
            })
            .collect()
    }
}
