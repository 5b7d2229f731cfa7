//! Posterior sampling for reinforcement learning with learned dynamics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::models::TransitionModel;
use super::planning::{expected_return, optimal_policy};
use super::policy::PolicyMatrix;
use crate::envs::{add_transition, mdp_to_count_covariates, sample_index, Environment, MdpTemplate, Transition};
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsrlVariant {
    /// Best policy, on average, across several sampled models.
    Sampled,
    /// Greedy policy for the posterior-mean model.
    Mean,
}

/// Plans for `m_samples` sampled models and keeps the candidate with the
/// highest average expected return across all of them (lowest index on ties).
pub fn psrl_step_sampled<R: Rng + ?Sized>(
    model: &TransitionModel,
    template: &MdpTemplate,
    m_samples: usize,
    rng: &mut R,
) -> Result<PolicyMatrix> {
    if m_samples == 0 {
        return Err(invalid("m_samples must be at least 1"));
    }
    let sampler = model.sampler()?;
    let mdps = (0..m_samples).map(|_| template.assemble(&sampler.sample(rng))).collect::<Result<Vec<_>>>()?;
    let candidates = mdps.iter().map(optimal_policy).collect::<Result<Vec<_>>>()?;
    if candidates.len() == 1 {
        return Ok(candidates.into_iter().next().expect("one candidate"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, policy) in candidates.iter().enumerate() {
        let mut total = 0.0;
        for mdp in &mdps {
            total += expected_return(mdp, policy)?;
        }
        let score = total / mdps.len() as f64;
        if score > best.1 {
            best = (i, score);
        }
    }
    Ok(candidates[best.0].clone())
}

/// Optimal policy of the posterior-mean model.
pub fn psrl_step_mean(model: &TransitionModel, template: &MdpTemplate) -> Result<PolicyMatrix> {
    optimal_policy(&template.assemble(&model.mean())?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsrlConfig {
    pub variant: PsrlVariant,
    pub replan_every: usize,
    pub horizon: usize,
    #[serde(default = "default_m_samples")]
    pub m_samples: usize,
    /// Restart from the initial distribution every this many transitions.
    #[serde(default)]
    pub episode_length: Option<usize>,
    /// Divide evaluated returns by the optimal return.
    #[serde(default)]
    pub normalize: bool,
    /// End the run at the first evaluated policy reaching this value.
    #[serde(default)]
    pub stop_at: Option<f64>,
}

fn default_m_samples() -> usize {
    10
}

impl PsrlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replan_every == 0 || self.m_samples == 0 || self.episode_length == Some(0) {
            return Err(invalid("replan_every, m_samples and episode_length must be at least 1"));
        }
        Ok(())
    }
}

/// Expected return of each successive policy under the true model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PsrlTrace {
    /// Transitions observed when the policy was computed.
    pub transitions: Vec<usize>,
    pub value: Vec<f64>,
}

impl PsrlTrace {
    /// First recorded point whose value reaches `level`.
    pub fn first_reaching(&self, level: f64) -> Option<usize> {
        self.transitions.iter().zip(&self.value).find(|(_, &v)| v >= level).map(|(&t, _)| t)
    }
}

fn plan<R: Rng + ?Sized>(
    model: &TransitionModel,
    env: &Environment,
    cfg: &PsrlConfig,
    rng: &mut R,
) -> Result<PolicyMatrix> {
    match cfg.variant {
        PsrlVariant::Sampled => psrl_step_sampled(model, &env.template, cfg.m_samples, rng),
        PsrlVariant::Mean => psrl_step_mean(model, &env.template),
    }
}

/// Acts with the current policy, counts physical transitions and refits the
/// model every `replan_every` steps; each new policy is evaluated exactly on
/// the true MDP.
pub fn psrl_loop<R: Rng + ?Sized>(
    env: &Environment,
    model: &mut TransitionModel,
    cfg: &PsrlConfig,
    rng: &mut R,
) -> Result<PsrlTrace> {
    cfg.validate()?;
    let mut trace = PsrlTrace::default();
    if cfg.horizon == 0 {
        return Ok(trace);
    }
    let scale = if cfg.normalize {
        let best = expected_return(&env.mdp, &optimal_policy(&env.mdp)?)?;
        if best == 0.0 {
            return Err(invalid("cannot normalize by a zero optimal return"));
        }
        best
    } else {
        1.0
    };
    let mut counts = mdp_to_count_covariates(&[], env.n_states(), env.n_actions())?;
    let mut policy = plan(model, env, cfg, rng)?;
    let mut state = env.sample_start(rng);
    for step in 1..=cfg.horizon {
        if let Some(len) = cfg.episode_length {
            if step > 1 && (step - 1) % len == 0 {
                state = env.sample_start(rng);
            }
        }
        let action = sample_index(policy.probs.row(state).iter().copied(), rng);
        let next = env.sample_next(state, action, rng);
        add_transition(&mut counts, &Transition { state, action, next })?;
        state = env.after_arrival(next);

        if step % cfg.replan_every == 0 {
            model.update(&counts)?;
            policy = plan(model, env, cfg, rng)?;
            let value = expected_return(&env.mdp, &policy)? / scale;
            trace.transitions.push(step);
            trace.value.push(value);
            if cfg.stop_at.is_some_and(|level| value >= level) {
                break;
            }
        }
    }
    Ok(trace)
}
