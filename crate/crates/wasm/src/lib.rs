//! Browser bindings: each export takes plain numbers and returns a JSON
//! string, so the page needs no glue beyond what wasm-bindgen generates.

use nalgebra::DMatrix;
use pgdm::agents::{arrow_field, fit_pg, DirichletSettings, Lengthscale, ModelKind, PgSettings, PriorMean};
use pgdm::baselines::dirichlet_posterior_mean;
use pgdm::envs::{queue_exact_row, queue_step, QueueNetSpec};
use pgdm::experiments::{run_imitation, ImitationParams};
use pgdm::pgvi::expected_probs;
use pgdm::rng::SeedTree;
use pgdm::CountMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct LineFit {
    pg: Vec<Vec<f64>>,
    dirichlet: Vec<Vec<f64>>,
    elbo_trace: Vec<f64>,
}

/// Counts at `C` evenly spaced points (row-major `C x K`) fitted with the
/// correlated model and with independent Dirichlet rows.
pub fn fit_line_json(counts: &[u32], n_categories: usize, theta: f64, lengthscale: f64) -> Result<String, String> {
    if n_categories < 2 || counts.is_empty() || counts.len() % n_categories != 0 {
        return Err("counts must be a nonempty C x K array with K >= 2".into());
    }
    let c = counts.len() / n_categories;
    let data: Vec<Vec<u64>> = counts.chunks(n_categories).map(|r| r.iter().map(|&x| x as u64).collect()).collect();
    let x = CountMatrix::from_rows(&data).map_err(|e| e.to_string())?;
    let distance = DMatrix::from_fn(c, c, |i, j| (i as f64 - j as f64).abs());
    let pg = PgSettings {
        theta,
        lengthscale: Lengthscale::Value(lengthscale),
        prior_mean: PriorMean::UniformPredictive,
        ..Default::default()
    };
    pg.validate().map_err(|e| e.to_string())?;
    let hyper = pg.hyper(&distance, n_categories).map_err(|e| e.to_string())?;
    let fit = fit_pg(&x, &hyper, &pg.fit, None).map_err(|e| e.to_string())?;
    let dir = DirichletSettings::default().model(&x).map_err(|e| e.to_string())?;
    let out = LineFit {
        pg: rows(&expected_probs(&fit.posterior)),
        dirichlet: rows(&dirichlet_posterior_mean(&dir)),
        elbo_trace: fit.elbo_trace,
    };
    Ok(serde_json::to_string(&out).expect("json"))
}

#[derive(Serialize)]
struct ImitationView {
    width: usize,
    height: usize,
    /// Per state `[u, v]`, `v` pointing north.
    estimate: Vec<[f64; 2]>,
    expert: Vec<[f64; 2]>,
    demonstrated: Vec<bool>,
    rewards: Vec<[usize; 2]>,
    mean_hellinger: f64,
    value_loss: f64,
}

/// One imitation run on a 10x10 grid.
pub fn imitation_json(seed: u32, coverage: f64, model: &str) -> Result<String, String> {
    let kind = match model {
        "pg" => ModelKind::Pg,
        "dirichlet" => ModelKind::Dirichlet,
        other => return Err(format!("unknown model `{other}`")),
    };
    let params = ImitationParams { coverage, ..ImitationParams::default() };
    let run = run_imitation(&params, kind, seed as u64).map_err(|e| e.to_string())?;
    let geom = &run.world.geometry;
    let uv = |p| arrow_field(p, geom).into_iter().map(|a| [a.u, a.v]).collect();
    let view = ImitationView {
        width: params.width,
        height: params.height,
        estimate: uv(&run.estimate),
        expert: uv(&run.expert),
        demonstrated: run.demos.demonstrated_states(),
        rewards: run.world.spec.rewards.iter().map(|r| r.cell).collect(),
        mean_hellinger: run.mean_hellinger,
        value_loss: run.value_loss,
    };
    Ok(serde_json::to_string(&view).expect("json"))
}

#[derive(Serialize)]
struct QueueView {
    buffers: [usize; 2],
    /// Next-state probabilities indexed `b1 * (B2 + 1) + b2`.
    exact: Vec<f64>,
    empirical: Vec<f64>,
    mean_reward: f64,
}

/// Exact next-state distribution of the default queueing network against
/// `samples` simulated steps.
pub fn queue_row_json(b1: usize, b2: usize, action: usize, samples: u32, seed: u32) -> Result<String, String> {
    let spec = QueueNetSpec::default();
    if b1 > spec.buffers[0] || b2 > spec.buffers[1] || action > 1 || samples == 0 {
        return Err("state must lie within the buffers, action be 0 or 1 and samples positive".into());
    }
    let exact = queue_exact_row(&spec, [b1, b2], action);
    let mut empirical = vec![0.0; exact.len()];
    let mut reward = 0.0;
    let mut rng = SeedTree::new(seed as u64).stream("queue");
    for _ in 0..samples {
        let (next, r) = queue_step(&spec, [b1, b2], action, &mut rng);
        empirical[spec.index_of(next)] += 1.0 / samples as f64;
        reward += r / samples as f64;
    }
    let view = QueueView { buffers: spec.buffers, exact, empirical, mean_reward: reward };
    Ok(serde_json::to_string(&view).expect("json"))
}

#[wasm_bindgen]
pub fn fit_line(counts: &[u32], n_categories: usize, theta: f64, lengthscale: f64) -> Result<String, JsError> {
    fit_line_json(counts, n_categories, theta, lengthscale).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn imitation(seed: u32, coverage: f64, model: &str) -> Result<String, JsError> {
    imitation_json(seed, coverage, model).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn queue_row(b1: usize, b2: usize, action: usize, samples: u32, seed: u32) -> Result<String, JsError> {
    queue_row_json(b1, b2, action, samples, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn line_fit_shares_strength() {
        // Counts only at the two ends; the middle borrows from both.
        let counts = [9, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 9];
        let v: Value = serde_json::from_str(&fit_line_json(&counts, 3, 4.0, 2.0).unwrap()).unwrap();
        let pg = &v["pg"];
        assert_eq!(pg.as_array().unwrap().len(), 5);
        let p = |i: usize, k: usize| pg[i][k].as_f64().unwrap();
        assert!(p(1, 0) > p(1, 2) && p(3, 2) > p(3, 0));
        assert!((v["dirichlet"][2][0].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(fit_line_json(&[1, 2, 3], 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn imitation_view_has_a_cell_per_state() {
        let v: Value = serde_json::from_str(&imitation_json(3, 0.5, "pg").unwrap()).unwrap();
        assert_eq!(v["estimate"].as_array().unwrap().len(), 100);
        assert!(v["value_loss"].as_f64().unwrap() >= 0.0);
        assert!(imitation_json(3, 0.5, "oracle").is_err());
    }

    #[test]
    fn queue_rows_are_distributions() {
        let v: Value = serde_json::from_str(&queue_row_json(4, 7, 1, 2000, 1).unwrap()).unwrap();
        for key in ["exact", "empirical"] {
            let s: f64 = v[key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9, "{key} sums to {s}");
        }
        assert!(queue_row_json(11, 0, 0, 10, 0).is_err());
    }
}
