//! Paired comparison of two run directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::run::{num, MANIFEST_FILE, SUMMARY_FILE};

/// Per-metric summary of `a - b` over the seeds both runs completed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricComparison {
    pub metric: String,
    pub pairs: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_delta: f64,
    /// Seeds where `a < b`.
    pub a_lower: usize,
    pub a_higher: usize,
    pub ties: usize,
    /// Two-sided exact sign test, ties dropped.
    pub sign_p: f64,
}

pub const HEADER: &[&str] =
    &["metric", "pairs", "mean_a", "mean_b", "mean_delta", "a_lower", "a_higher", "ties", "sign_p"];

impl MetricComparison {
    pub fn row(&self) -> Vec<String> {
        vec![
            self.metric.clone(),
            self.pairs.to_string(),
            num(self.mean_a),
            num(self.mean_b),
            num(self.mean_delta),
            self.a_lower.to_string(),
            self.a_higher.to_string(),
            self.ties.to_string(),
            num(self.sign_p),
        ]
    }
}

fn read_manifest(dir: &Path) -> CliResult<Value> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Other(format!("cannot read run manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

type Summary = BTreeMap<(String, u64), f64>;

fn read_summary(dir: &Path) -> CliResult<Summary> {
    let path = dir.join(SUMMARY_FILE);
    if !path.is_file() {
        return Err(CliError::Other(format!("missing metric file {}", path.display())));
    }
    let bad = |msg: String| CliError::Other(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["seed", "metric", "value"] {
        return Err(bad("expected header seed,metric,value".into()));
    }
    let mut out = Summary::new();
    for record in reader.records() {
        let r = record.map_err(|e| bad(e.to_string()))?;
        let seed = r[0].parse().map_err(|_| bad(format!("bad seed `{}`", &r[0])))?;
        let value = r[2].parse().map_err(|_| bad(format!("bad value `{}`", &r[2])))?;
        out.insert((r[1].to_string(), seed), value);
    }
    Ok(out)
}

/// `P(|X - n/2| >= |k - n/2|)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test(lower: usize, higher: usize) -> f64 {
    let n = lower + higher;
    if n == 0 {
        return 1.0;
    }
    let k = lower.min(higher);
    // ln C(n, i) - n ln 2, accumulated term by term.
    let mut ln_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_pmf += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += ln_pmf.exp();
    }
    (2.0 * tail).min(1.0)
}

pub fn compare(a: &Path, b: &Path) -> CliResult<Vec<MetricComparison>> {
    let (ma, mb) = (read_manifest(a)?, read_manifest(b)?);
    for key in ["scenario", "env_hash"] {
        if ma.get(key) != mb.get(key) {
            return Err(CliError::Config(format!(
                "runs differ in {key}: {} vs {}",
                ma.get(key).unwrap_or(&Value::Null),
                mb.get(key).unwrap_or(&Value::Null)
            )));
        }
    }
    let (sa, sb) = (read_summary(a)?, read_summary(b)?);
    let mut by_metric: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for ((metric, seed), &va) in &sa {
        if let Some(&vb) = sb.get(&(metric.clone(), *seed)) {
            by_metric.entry(metric).or_default().push((va, vb));
        }
    }
    if by_metric.is_empty() {
        return Err(CliError::Config("the runs share no (seed, metric) pairs".into()));
    }
    Ok(by_metric
        .into_iter()
        .map(|(metric, pairs)| {
            let n = pairs.len() as f64;
            // Equal values, infinities included, count as a zero difference.
            let delta = |&(x, y): &(f64, f64)| if x == y { 0.0 } else { x - y };
            let a_lower = pairs.iter().filter(|(x, y)| x < y).count();
            let a_higher = pairs.iter().filter(|(x, y)| x > y).count();
            MetricComparison {
                metric: metric.to_string(),
                pairs: pairs.len(),
                mean_a: pairs.iter().map(|p| p.0).sum::<f64>() / n,
                mean_b: pairs.iter().map(|p| p.1).sum::<f64>() / n,
                mean_delta: pairs.iter().map(delta).sum::<f64>() / n,
                a_lower,
                a_higher,
                ties: pairs.len() - a_lower - a_higher,
                sign_p: sign_test(a_lower, a_higher),
            }
        })
        .collect())
}
