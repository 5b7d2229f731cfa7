mod compare;
mod config;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use pgdm::agents::{fit_pg, Lengthscale, LengthscaleRule, PgSettings, PriorMean};
use pgdm::CountMatrix;
use serde_json::Value;

use config::Config;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "pgdm", version, about = "Run and compare correlated-multinomial model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario config (or the manifest of an earlier run).
    Run {
        config: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: $PGDM_OUTPUT_ROOT/<scenario>-<model>-<hash>]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set params.pg.theta=2`.
        #[arg(long = "set", value_name = "KEY.PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Paired per-seed metric differences (A - B) with a sign test.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
    /// Fit a model to a count CSV and write its checkpoint.
    Fit {
        /// CSV with header `covariate_id,k1,...,kK`.
        counts: PathBuf,
        /// CSV with header `covariate_id,x1,...,xD`; distances are Euclidean.
        #[arg(long)]
        coords: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        /// A positive number, or `max` for the largest pairwise distance.
        #[arg(long, default_value = "max")]
        lengthscale: String,
        #[arg(long, value_enum, default_value_t = MeanArg::Uniform)]
        prior_mean: MeanArg,
        /// Learn the scale (and prior mean) by EM.
        #[arg(long)]
        em: bool,
        /// Checkpoint path [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeanArg {
    Uniform,
    UniformPredictive,
    Zero,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pgdm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Run { config, seed, out, mut overrides } => {
            if let Some(s) = seed {
                overrides.push(format!("seeds=[{s}]"));
            }
            let cfg = Config::from_value(read_config_value(&config)?, &overrides)?;
            let dir = run::output_dir(&cfg, out);
            eprintln!("pgdm: writing {}", dir.display());
            run::run(&cfg, &dir)?;
            println!("{}", dir.display());
            Ok(())
        }
        Cmd::Compare { dir_a, dir_b } => {
            let rows = compare::compare(&dir_a, &dir_b)?;
            let mut w =
                csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(std::io::stdout());
            let io = |e: csv::Error| CliError::Other(e.to_string());
            w.write_record(compare::HEADER).map_err(io)?;
            for r in &rows {
                w.write_record(r.row()).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Other(e.to_string()))
        }
        Cmd::Fit { counts, coords, theta, lengthscale, prior_mean, em, out } => {
            let lengthscale =
                match lengthscale.as_str() {
                    "max" => Lengthscale::Rule(LengthscaleRule::MaxDistance),
                    s => Lengthscale::Value(s.parse().map_err(|_| {
                        CliError::Config(format!("--lengthscale: expected `max` or a number, got `{s}`"))
                    })?),
                };
            let prior_mean = match prior_mean {
                MeanArg::Uniform => PriorMean::Uniform,
                MeanArg::UniformPredictive => PriorMean::UniformPredictive,
                MeanArg::Zero => PriorMean::Zero,
            };
            let mut pg = PgSettings { theta, lengthscale, prior_mean, ..Default::default() };
            pg.fit.em_enabled = em;
            pg.validate()?;
            let text = std::fs::read_to_string(&counts).map_err(|e| CliError::io(&counts, e))?;
            let x = CountMatrix::from_csv(&text).map_err(|e| CliError::Config(format!("{}: {e}", counts.display())))?;
            let distance = read_coords(&coords)?;
            if distance.nrows() != x.n_covariates() {
                return Err(CliError::Config(format!(
                    "{} has {} covariates but {} has {}",
                    counts.display(),
                    x.n_covariates(),
                    coords.display(),
                    distance.nrows()
                )));
            }
            let hyper = pg.hyper(&distance, x.n_categories())?;
            let fit = fit_pg(&x, &hyper, &pg.fit, None)?;
            let json = fit.checkpoint()?.to_json()? + "\n";
            match out {
                Some(path) => std::fs::write(&path, json).map_err(|e| CliError::io(&path, e)),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
    }
}

/// A config file, or a run manifest whose embedded config is rerun.
fn read_config_value(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if value.get("config_hash").is_some() {
        if let Some(cfg) = value.get_mut("config") {
            return Ok(cfg.take());
        }
    }
    Ok(value)
}

/// Euclidean distances between the rows of a `covariate_id,x1,...` CSV.
fn read_coords(path: &Path) -> CliResult<DMatrix<f64>> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.get(0).map(str::trim) != Some("covariate_id") || header.len() < 2 {
        return Err(bad("header must be covariate_id,x1,...".into()));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| bad(e.to_string()))?;
        let id = r[0].trim().parse().map_err(|_| bad(format!("bad covariate id `{}`", &r[0])))?;
        let x = r.iter().skip(1).map(|f| f.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
        let x = x.map_err(|_| bad(format!("bad coordinate in row {id}")))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite coordinate in row {id}")));
        }
        rows.push((id, x));
    }
    let c = rows.len();
    let mut ordered: Vec<Option<Vec<f64>>> = vec![None; c];
    for (id, x) in rows {
        if id >= c || ordered[id].is_some() {
            return Err(bad(format!("covariate ids must be a permutation of 0..{c}, saw {id}")));
        }
        ordered[id] = Some(x);
    }
    let pts: Vec<Vec<f64>> = ordered.into_iter().map(|r| r.expect("checked")).collect();
    Ok(DMatrix::from_fn(c, c, |i, j| pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()))
}
