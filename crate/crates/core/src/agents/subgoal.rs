//! Subgoal-based policy models: every state targets a latent goal cell and
//! acts through a goal-conditioned softmax over expected path distances.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::imitation::DemonstrationSet;
use super::models::{fit_pg, DirichletSettings, PgFit, PgSettings};
use super::policy::PolicyMatrix;
use crate::counts::CountMatrix;
use crate::envs::{sample_index, GridGeometry};
use crate::error::{invalid, Result};
use crate::pgvi::PosteriorSampler;

/// `p(a|s,g) ∝ exp(-beta_g E[d(next(s, a), g)])` with wall-respecting BFS
/// distances `d` and the expectation under the physical rows. States that
/// cannot reach `g` get a uniform row.
pub fn subgoal_action_model(
    geometry: &GridGeometry,
    physical: &[DMatrix<f64>],
    goal: usize,
    beta_g: f64,
) -> Result<DMatrix<f64>> {
    if !(beta_g >= 0.0) {
        return Err(invalid("beta_g must be nonnegative"));
    }
    let n = geometry.n_states();
    if goal >= n || physical.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(invalid("goal or dynamics do not match the grid"));
    }
    let dist = geometry.bfs_distances(goal);
    let a_n = physical.len();
    let mut table = DMatrix::zeros(n, a_n);
    for s in 0..n {
        if dist[s].is_none() {
            table.row_mut(s).fill(1.0 / a_n as f64);
            continue;
        }
        // Anything reachable from s is connected to s and hence to the goal.
        let expected: Vec<f64> =
            physical.iter().map(|m| (0..n).map(|next| m[(s, next)] * dist[next].unwrap_or(0) as f64).sum()).collect();
        let best = expected.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = expected
            .iter()
            .map(|&e| {
                if beta_g.is_infinite() {
                    if e == best {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-beta_g * (e - best)).exp()
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for a in 0..a_n {
            table[(s, a)] = weights[a] / total;
        }
    }
    Ok(table)
}

/// Prior over per-state goal distributions.
#[derive(Clone, Debug, PartialEq)]
pub enum GoalPrior {
    Pg { settings: PgSettings, distance: DMatrix<f64> },
    Dirichlet(DirichletSettings),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    /// Weight goal proposals by the demonstration likelihood. Without it the
    /// assignments never see the demonstrations.
    pub include_likelihood: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { burn_in: 50, n_samples: 100, include_likelihood: true }
    }
}

#[derive(Clone, Debug)]
pub struct SubgoalResult {
    /// `(1/M) sum_m p(a | s, g_s^m)`.
    pub policy: PolicyMatrix,
    /// Retained assignments, as indices into the goal set.
    pub samples: Vec<Vec<usize>>,
}

impl SubgoalResult {
    /// Most frequent retained goal index per state (lowest index on ties).
    pub fn modal_goals(&self, n_goals: usize) -> Vec<usize> {
        let n_states = self.policy.n_states();
        (0..n_states)
            .map(|s| {
                let mut freq = vec![0usize; n_goals];
                for sample in &self.samples {
                    freq[sample[s]] += 1;
                }
                (0..n_goals).fold(0, |best, g| if freq[g] > freq[best] { g } else { best })
            })
            .collect()
    }
}

/// Alternates a variational fit of the goal model on one-hot goal counts with
/// a Gibbs sweep over the goal assignments.
///
/// `tables[g]` is the `S x A` action model for the `g`-th goal of the goal set.
pub fn subgoal_gibbs_vi<R: Rng + ?Sized>(
    demos: &DemonstrationSet,
    tables: &[DMatrix<f64>],
    prior: &GoalPrior,
    cfg: &GibbsConfig,
    rng: &mut R,
) -> Result<SubgoalResult> {
    let (s_n, a_n) = (demos.n_states, demos.n_actions);
    let g_n = tables.len();
    if g_n == 0 || tables.iter().any(|t| t.nrows() != s_n || t.ncols() != a_n) {
        return Err(invalid("need at least one S x A action table per goal"));
    }
    if cfg.n_samples == 0 {
        return Err(invalid("n_samples must be at least 1"));
    }
    if g_n == 1 {
        let policy = match PolicyMatrix::new(tables[0].clone()) {
            Ok(p) => p,
            Err(_) => PolicyMatrix::from_weights(tables[0].clone())?,
        };
        return Ok(SubgoalResult { policy, samples: vec![vec![0; s_n]; cfg.n_samples] });
    }

    let x = demos.counts();
    let log_lik = DMatrix::from_fn(s_n, g_n, |s, g| {
        if !cfg.include_likelihood {
            return 0.0;
        }
        (0..a_n).filter(|&a| x.get(s, a) > 0).map(|a| x.get(s, a) as f64 * tables[g][(s, a)].ln()).sum()
    });

    // Start from the likelihood alone.
    let mut goals: Vec<usize> = (0..s_n).map(|s| draw_goal(&vec![1.0 / g_n as f64; g_n], &log_lik, s, rng)).collect();

    let pg_hyper = match prior {
        GoalPrior::Pg { settings, distance } => {
            settings.validate()?;
            Some(settings.hyper(distance, g_n)?)
        }
        GoalPrior::Dirichlet(_) => None,
    };
    let mut previous: Option<PgFit> = None;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut policy = DMatrix::zeros(s_n, a_n);

    for it in 0..cfg.burn_in + cfg.n_samples {
        let mut one_hot = CountMatrix::zeros(s_n, g_n)?;
        for (s, &g) in goals.iter().enumerate() {
            one_hot.increment(s, g);
        }
        let probs = match (prior, &pg_hyper) {
            (GoalPrior::Pg { settings, .. }, Some(hyper)) => {
                let fitted = fit_pg(&one_hot, hyper, &settings.fit, previous.as_ref())?;
                let draw = PosteriorSampler::new(&fitted.posterior)?.sample(rng);
                previous = Some(fitted);
                draw
            }
            (GoalPrior::Dirichlet(settings), _) => dirichlet_rows(&one_hot, settings.alpha, rng)?,
            _ => unreachable!("PG prior always has hyper-parameters"),
        };
        for (s, goal) in goals.iter_mut().enumerate() {
            let row: Vec<f64> = probs.row(s).iter().copied().collect();
            *goal = draw_goal(&row, &log_lik, s, rng);
        }
        if it >= cfg.burn_in {
            for (s, &g) in goals.iter().enumerate() {
                let mut row = policy.row_mut(s);
                row += tables[g].row(s);
            }
            samples.push(goals.clone());
        }
    }
    policy /= cfg.n_samples as f64;
    Ok(SubgoalResult { policy: PolicyMatrix::from_weights(policy)?, samples })
}

/// Independent Dirichlet rows with the one-hot goal counts added.
fn dirichlet_rows<R: Rng + ?Sized>(counts: &CountMatrix, alpha: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("Dirichlet concentration must be positive"));
    }
    let (s_n, g_n) = (counts.n_covariates(), counts.n_categories());
    let mut out = DMatrix::zeros(s_n, g_n);
    for s in 0..s_n {
        for g in 0..g_n {
            let shape = alpha + counts.get(s, g) as f64;
            out[(s, g)] = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        }
        let total = out.row(s).sum();
        if total > 0.0 {
            let mut row = out.row_mut(s);
            row /= total;
        } else {
            out.row_mut(s).fill(1.0 / g_n as f64);
        }
    }
    Ok(out)
}

/// Draws `g ∝ p[g] exp(log_lik[s, g])`, falling back to `p` alone when the
/// likelihood rules out every goal with prior mass.
fn draw_goal<R: Rng + ?Sized>(p: &[f64], log_lik: &DMatrix<f64>, s: usize, rng: &mut R) -> usize {
    let logw: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(g, &pg)| if pg > 0.0 { pg.ln() + log_lik[(s, g)] } else { f64::NEG_INFINITY })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return sample_index(p.iter().copied(), rng);
    }
    sample_index(logw.iter().map(|&l| (l - max).exp()), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_gridworld, GridSpec};

    #[test]
    fn corridor_is_one_hot_in_the_hard_limit() {
        // 3x1 corridor, goal at the east end, noise-free moves.
        let spec = GridSpec { noise_sigma: 0.0, ..GridSpec::empty(3, 1) };
        let w = build_gridworld(&spec).unwrap();
        let t = subgoal_action_model(&w.geometry, &w.env.physical, 2, f64::INFINITY).unwrap();
        assert_eq!(t.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 0.0]);
        // At the goal every move keeps or raises the distance; staying moves
        // (north, south, east) tie.
        let at_goal: Vec<f64> = t.row(2).iter().copied().collect();
        assert_eq!(at_goal, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn unreachable_goal_gives_uniform_row() {
        let spec = GridSpec { walls: vec![[[0, 0], [1, 0]]], ..GridSpec::empty(2, 1) };
        let w = build_gridworld(&spec).unwrap();
        let t = subgoal_action_model(&w.geometry, &w.env.physical, 1, 2.0).unwrap();
        assert!(t.row(0).iter().all(|&p| p == 0.25));
    }

    #[test]
    fn single_goal_returns_its_table() {
        let w = build_gridworld(&GridSpec::empty(3, 3)).unwrap();
        let t = subgoal_action_model(&w.geometry, &w.env.physical, 4, 2.0).unwrap();
        let demos = DemonstrationSet::new(9, 4, vec![(0, 1), (3, 2)]).unwrap();
        let mut rng = crate::rng::SeedTree::new(1).stream("g");
        let r = subgoal_gibbs_vi(
            &demos,
            &[t.clone()],
            &GoalPrior::Dirichlet(DirichletSettings::default()),
            &GibbsConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(r.policy.probs, t);
    }
}
