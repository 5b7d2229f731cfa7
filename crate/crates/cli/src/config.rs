//! Run configuration: strict JSON, dotted-path overrides, typed per-scenario
//! parameters.

use std::path::PathBuf;

use pgdm::agents::ModelKind;
use pgdm::experiments::{BrlGrid10Params, BrlQueueingParams, ImitationParams, SubgoalParams, SysidParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Imitation,
    Subgoal,
    Sysid,
    BrlGrid10,
    BrlQueueing,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Imitation => "imitation",
            Scenario::Subgoal => "subgoal",
            Scenario::Sysid => "sysid",
            Scenario::BrlGrid10 => "brl_grid10",
            Scenario::BrlQueueing => "brl_queueing",
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// The file format. `params` stays untyped until the scenario is known.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Scenario,
    model: ModelKind,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    export_mdp: bool,
    /// `None` writes checkpoints only where they are small (imitation).
    #[serde(default)]
    write_checkpoints: Option<bool>,
    #[serde(default = "empty_object")]
    params: Value,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Imitation(ImitationParams),
    Subgoal(SubgoalParams),
    Sysid(SysidParams),
    BrlGrid10(BrlGrid10Params),
    BrlQueueing(BrlQueueingParams),
}

impl Params {
    fn to_value(&self) -> Value {
        let v = match self {
            Params::Imitation(p) => serde_json::to_value(p),
            Params::Subgoal(p) => serde_json::to_value(p),
            Params::Sysid(p) => serde_json::to_value(p),
            Params::BrlGrid10(p) => serde_json::to_value(p),
            Params::BrlQueueing(p) => serde_json::to_value(p),
        };
        v.expect("params serialize")
    }

    fn validate(&self) -> pgdm::Result<()> {
        match self {
            Params::Imitation(p) => p.validate(),
            Params::Subgoal(p) => p.validate(),
            Params::Sysid(p) => p.validate(),
            Params::BrlGrid10(p) => p.validate(),
            Params::BrlQueueing(p) => p.validate(),
        }
    }
}

/// A validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub export_mdp: bool,
    pub write_checkpoints: Option<bool>,
    pub params: Params,
}

/// Keys that choose or tune the learner rather than the environment.
const AGENT_KEYS: &[&str] = &["pg", "dirichlet", "gibbs", "estimator", "variant", "m_samples", "replan_every"];

impl Config {
    pub fn from_value(mut value: Value, overrides: &[String]) -> CliResult<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let raw: RawConfig = strict(value, "")?;
        let params = match raw.scenario {
            Scenario::Imitation => Params::Imitation(strict(raw.params, "params.")?),
            Scenario::Subgoal => Params::Subgoal(strict(raw.params, "params.")?),
            Scenario::Sysid => Params::Sysid(strict(raw.params, "params.")?),
            Scenario::BrlGrid10 => Params::BrlGrid10(strict(raw.params, "params.")?),
            Scenario::BrlQueueing => Params::BrlQueueing(strict(raw.params, "params.")?),
        };
        params.validate().map_err(|e| CliError::Config(format!("params: {e}")))?;
        if raw.seeds.is_empty() {
            return Err(CliError::Config("seeds: need at least one seed".into()));
        }
        if raw.model == ModelKind::Oracle && matches!(raw.scenario, Scenario::Imitation | Scenario::Subgoal) {
            return Err(CliError::Config(format!("model: `oracle` is not available for {}", raw.scenario.name())));
        }
        Ok(Self {
            scenario: raw.scenario,
            model: raw.model,
            seeds: raw.seeds,
            output_dir: raw.output_dir,
            export_mdp: raw.export_mdp,
            write_checkpoints: raw.write_checkpoints,
            params,
        })
    }

    /// The effective configuration, defaults included.
    pub fn to_value(&self) -> Value {
        let raw = RawConfig {
            scenario: self.scenario,
            model: self.model,
            seeds: self.seeds.clone(),
            output_dir: self.output_dir.clone(),
            export_mdp: self.export_mdp,
            write_checkpoints: self.write_checkpoints,
            params: self.params.to_value(),
        };
        serde_json::to_value(raw).expect("config serializes")
    }

    /// SHA-256 of the compact effective configuration. The output directory
    /// is left out: it says where a run goes, not what it computes.
    pub fn hash(&self) -> String {
        let mut v = self.to_value();
        v.as_object_mut().expect("object").remove("output_dir");
        sha256_hex(v.to_string().as_bytes())
    }

    /// Hash of the scenario and its environment settings only, so runs with
    /// different learners on the same problem can be compared.
    pub fn env_hash(&self) -> String {
        let mut params = self.params.to_value();
        if let Some(map) = params.as_object_mut() {
            map.retain(|k, _| !AGENT_KEYS.contains(&k.as_str()));
        }
        let v = serde_json::json!({ "scenario": self.scenario, "params": params });
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn checkpoints_enabled(&self) -> bool {
        self.write_checkpoints.unwrap_or(self.scenario == Scenario::Imitation)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn strict<T: DeserializeOwned>(value: Value, prefix: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { prefix.trim_end_matches('.').to_string() } else { format!("{prefix}{path}") };
        let at = if at.is_empty() { "config".to_string() } else { at };
        CliError::Config(format!("{at}: {}", e.inner()))
    })
}

/// Applies `a.b.c=value`. The value is parsed as JSON when possible and
/// taken as a string otherwise; missing objects along the path are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key.path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override `{assignment}` has an empty key")));
    }
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("override `{path}`: `{}` is not an object", keys[..i].join(".")))
        })?;
        if i + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert_with(empty_object);
    }
    unreachable!("path has at least one key")
}
