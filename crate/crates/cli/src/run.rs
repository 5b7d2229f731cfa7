//! Runs one configuration over its seeds and writes the run directory.
//!
//! ```text
//! <out>/config.json     effective config; `pgdm run` accepts it as is
//! <out>/manifest.json   hashes, seeds, git describe, status
//! <out>/summary.csv     seed,metric,value
//! <out>/seed-<n>/...    per-seed CSVs, checkpoints, MDP export
//! <out>/FAILED          only after a numerical failure
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pgdm::agents::{arrow_field, imitation_pg_fit, ModelKind, PgFit, PgSettings, PolicyMatrix};
use pgdm::envs::{GridGeometry, TabularMdp};
use pgdm::experiments::{
    run_brl_grid10, run_brl_queueing, run_imitation, run_subgoal, run_sysid, PolicyRun, SubgoalEstimator,
};
use pgdm::grid_distance;
use serde_json::json;

use crate::config::{Config, Params};
use crate::error::{CliError, CliResult};

pub const OUTPUT_ROOT_VAR: &str = "PGDM_OUTPUT_ROOT";
pub const FAILURE_MARKER: &str = "FAILED";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `--out`, else the config's `output_dir`, else a directory named after the
/// scenario, model and config hash under `$PGDM_OUTPUT_ROOT` (default `runs`).
pub fn output_dir(cfg: &Config, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        let model = serde_json::to_value(cfg.model).expect("model serializes");
        root.join(format!("{}-{}-{}", cfg.scenario.name(), model.as_str().unwrap_or("model"), &cfg.hash()[..12]))
    })
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Formats with the shortest representation that reads back exactly.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Header row, `.` decimals, LF line endings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Other(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    write(path, bytes)
}

type Metrics = Vec<(String, f64)>;

struct Manifest<'a> {
    cfg: &'a Config,
    git: String,
}

impl Manifest<'_> {
    fn write(&self, dir: &Path, status: &str, completed: &[u64]) -> CliResult<()> {
        let m = json!({
            "tool": "pgdm",
            "version": env!("CARGO_PKG_VERSION"),
            "git_describe": self.git,
            "scenario": self.cfg.scenario,
            "model": self.cfg.model,
            "config_hash": self.cfg.hash(),
            "env_hash": self.cfg.env_hash(),
            "seeds": self.cfg.seeds,
            "completed_seeds": completed,
            "status": status,
            "config": self.cfg.to_value(),
        });
        write(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m).expect("json") + "\n")
    }
}

pub fn run(cfg: &Config, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| CliError::io(&marker, e))?;
    }
    write(&dir.join("config.json"), serde_json::to_string_pretty(&cfg.to_value()).expect("json") + "\n")?;
    let manifest = Manifest { cfg, git: git_describe() };
    manifest.write(dir, "running", &[])?;

    let mut summary = Vec::new();
    let mut completed = Vec::new();
    for &seed in &cfg.seeds {
        let seed_dir = dir.join(format!("seed-{seed}"));
        fs::create_dir_all(&seed_dir).map_err(|e| CliError::io(&seed_dir, e))?;
        match run_seed(cfg, seed, &seed_dir) {
            Ok(metrics) => {
                summary.extend(metrics.into_iter().map(|(m, v)| vec![seed.to_string(), m, num(v)]));
                write_csv(&dir.join(SUMMARY_FILE), &["seed", "metric", "value"], &summary)?;
                completed.push(seed);
            }
            Err(e) => {
                if let CliError::Numerical(_) = e {
                    write(&marker, format!("seed {seed}: {e}\n"))?;
                    manifest.write(dir, "failed", &completed)?;
                }
                return Err(e);
            }
        }
    }
    manifest.write(dir, "complete", &completed)
}

fn write_checkpoint(path: &Path, fit: &PgFit) -> CliResult<()> {
    write(path, fit.checkpoint()?.to_json()? + "\n")
}

fn export_mdp(cfg: &Config, dir: &Path, mdp: &TabularMdp) -> CliResult<()> {
    if cfg.export_mdp {
        write(&dir.join("mdp.json"), mdp.to_json()? + "\n")?;
    }
    Ok(())
}

fn arrows(policy: &PolicyMatrix, geometry: &GridGeometry) -> Vec<(f64, f64)> {
    arrow_field(policy, geometry).into_iter().map(|a| (a.u, a.v)).collect()
}

fn policy_outputs(cfg: &Config, dir: &Path, run: &PolicyRun, refit: Option<&PgSettings>) -> CliResult<Metrics> {
    let geom = &run.world.geometry;
    let demonstrated = run.demos.demonstrated_states();
    let rows: Vec<Vec<String>> = (0..geom.n_states())
        .map(|s| {
            let (x, y) = geom.coords(s);
            let d = if demonstrated[s] { "1" } else { "0" };
            vec![s.to_string(), x.to_string(), y.to_string(), num(run.per_state_hellinger[s]), d.to_string()]
        })
        .collect();
    write_csv(&dir.join("per_state.csv"), &["state", "x", "y", "hellinger", "demonstrated"], &rows)?;

    let est = arrows(&run.estimate, geom);
    let exp = arrows(&run.expert, geom);
    let rows: Vec<Vec<String>> = (0..geom.n_states())
        .map(|s| {
            let (x, y) = geom.coords(s);
            let (u, v) = est[s];
            let (eu, ev) = exp[s];
            vec![s.to_string(), x.to_string(), y.to_string(), num(u), num(v), num(eu), num(ev)]
        })
        .collect();
    write_csv(&dir.join("arrows.csv"), &["state", "x", "y", "u", "v", "expert_u", "expert_v"], &rows)?;
    export_mdp(cfg, dir, &run.world.env.mdp)?;

    if let Some(pg) = refit.filter(|_| cfg.model == ModelKind::Pg && cfg.checkpoints_enabled()) {
        let fit = imitation_pg_fit(&run.demos, &grid_distance(&geom.cell_points()), pg)?;
        write_checkpoint(&dir.join("checkpoint.json"), &fit)?;
    }
    Ok(vec![("mean_hellinger".into(), run.mean_hellinger), ("value_loss".into(), run.value_loss)])
}

fn model_checkpoints(cfg: &Config, dir: &Path, fits: &[&PgFit]) -> CliResult<()> {
    if cfg.checkpoints_enabled() {
        for (a, fit) in fits.iter().enumerate() {
            write_checkpoint(&dir.join(format!("checkpoint-action{a}.json")), fit)?;
        }
    }
    Ok(())
}

fn run_seed(cfg: &Config, seed: u64, dir: &Path) -> CliResult<Metrics> {
    match &cfg.params {
        Params::Imitation(p) => {
            let run = run_imitation(p, cfg.model, seed)?;
            policy_outputs(cfg, dir, &run, Some(&p.pg))
        }
        Params::Subgoal(p) => {
            let run = run_subgoal(p, cfg.model, seed)?;
            // Only the action-level estimate is a single count model.
            let refit = (p.estimator == SubgoalEstimator::Imitation).then_some(&p.pg);
            policy_outputs(cfg, dir, &run, refit)
        }
        Params::Sysid(p) => {
            let run = run_sysid(p, cfg.model, seed)?;
            let rows: Vec<Vec<String>> = run.checkpoints.iter().map(|&(t, h)| vec![t.to_string(), num(h)]).collect();
            write_csv(&dir.join("sysid.csv"), &["transitions", "mean_hellinger"], &rows)?;
            export_mdp(cfg, dir, &run.world.env.mdp)?;
            model_checkpoints(cfg, dir, &run.model.pg_fits())?;
            Ok(run.checkpoints.iter().map(|&(t, h)| (format!("hellinger_at_{t}"), h)).collect())
        }
        Params::BrlGrid10(p) => {
            let run = run_brl_grid10(p, cfg.model, seed)?;
            let trace = &run.trace;
            let rows: Vec<Vec<String>> =
                trace.transitions.iter().zip(&trace.value).map(|(t, v)| vec![t.to_string(), num(*v)]).collect();
            write_csv(&dir.join("trace.csv"), &["transitions", "normalized_return"], &rows)?;
            export_mdp(cfg, dir, &run.env.mdp)?;
            model_checkpoints(cfg, dir, &run.model.pg_fits())?;
            let reach = |level: f64| trace.first_reaching(level).map_or(f64::INFINITY, |t| t as f64);
            Ok(vec![
                ("transitions_to_90".into(), reach(0.9)),
                ("final_return".into(), trace.value.last().copied().unwrap_or(f64::NAN)),
            ])
        }
        Params::BrlQueueing(p) => {
            let run = run_brl_queueing(p, cfg.model, seed)?;
            let trace = &run.trace;
            let rows: Vec<Vec<String>> = trace
                .transitions
                .iter()
                .zip(&trace.value)
                .map(|(t, v)| vec![(t / p.episode_length).to_string(), t.to_string(), num(*v)])
                .collect();
            write_csv(&dir.join("trace.csv"), &["episodes", "transitions", "expected_return"], &rows)?;
            export_mdp(cfg, dir, &run.env.mdp)?;
            model_checkpoints(cfg, dir, &run.model.pg_fits())?;
            let mean = trace.value.iter().sum::<f64>() / trace.value.len().max(1) as f64;
            Ok(vec![
                ("final_return".into(), trace.value.last().copied().unwrap_or(f64::NAN)),
                ("mean_return".into(), mean),
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_lf_and_plain_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a", "b"], &[vec!["1".into(), num(0.25)], vec!["2".into(), num(1e-7)]]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1,0.25\n2,0.0000001\n");
    }

    #[test]
    fn num_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e300, -2.5e-12, f64::INFINITY] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
