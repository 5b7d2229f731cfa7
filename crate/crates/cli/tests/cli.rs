use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pgdm::checkpoint::Checkpoint;

fn pgdm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgdm")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_SYSID: &str = r#"{
  "scenario": "sysid",
  "model": "pg",
  "params": {"width": 4, "height": 4, "checkpoints": [20, 60]}
}"#;

#[test]
fn sysid_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sysid.json", SMALL_SYSID);
    for out in ["a", "b"] {
        let o = pgdm(&["run", &cfg, "--seed", "7", "--out", out], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["summary.csv", "seed-7/sysid.csv", "config.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let csv = fs::read_to_string(tmp.path().join("a/seed-7/sysid.csv")).unwrap();
    assert!(csv.starts_with("transitions,mean_hellinger\n20,"));
    assert!(!csv.contains('\r'));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["git_describe"].is_string());
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"scenario": "maze", "model": "pg"}"#);
    let o = pgdm(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "typo.json", r#"{"scenario": "sysid", "model": "pg", "params": {"widht": 3}}"#);
    let o = pgdm(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("widht"), "{}", stderr(&o));
    // Nothing is computed or written for an invalid config.
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn imitation_default_writes_one_row_per_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "imitation.json", r#"{"scenario": "imitation", "model": "pg"}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_pgdm"))
        .args(["run", &cfg])
        .current_dir(tmp.path())
        .env("PGDM_OUTPUT_ROOT", tmp.path().join("root"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = Path::new(String::from_utf8(o.stdout).unwrap().trim()).to_path_buf();
    assert!(dir.starts_with(tmp.path().join("root")), "{}", dir.display());

    let per_state = fs::read_to_string(dir.join("seed-0/per_state.csv")).unwrap();
    let lines: Vec<&str> = per_state.lines().collect();
    assert_eq!(lines[0], "state,x,y,hellinger,demonstrated");
    assert_eq!(lines.len() - 1, 100);
    let arrows = fs::read_to_string(dir.join("seed-0/arrows.csv")).unwrap();
    assert_eq!(arrows.lines().count() - 1, 100);

    let ck = Checkpoint::from_json(&fs::read_to_string(dir.join("seed-0/checkpoint.json")).unwrap()).unwrap();
    assert_eq!((ck.n_covariates, ck.n_categories), (100, 4));
    assert_eq!(Checkpoint::from_json(&ck.to_json().unwrap()).unwrap(), ck);

    // The manifest reruns the same configuration.
    let o = pgdm(&["run", dir.join("manifest.json").to_str().unwrap(), "--out", "again"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.join("seed-0/per_state.csv")).unwrap(),
        fs::read(tmp.path().join("again/seed-0/per_state.csv")).unwrap()
    );
}

#[test]
fn compare_pairs_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sysid.json", SMALL_SYSID);
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["run", cfg.as_str(), "--out", out, "--set", "seeds=[1,2,3]"];
        args.extend_from_slice(extra);
        let o = pgdm(&args, tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run("pg", &[]);
    run("dir", &["--set", "model=dirichlet"]);

    let o = pgdm(&["compare", "pg", "pg"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "metric,pairs,mean_a,mean_b,mean_delta,a_lower,a_higher,ties,sign_p");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!((r[1], r[4], r[7], r[8]), ("3", "0", "3", "1"), "{r:?}");
    }

    let o = pgdm(&["compare", "pg", "dir"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    // Different environments cannot be paired.
    let o = pgdm(&["run", &cfg, "--out", "other", "--set", "params.noise_sigma=0.2"], tmp.path());
    assert!(o.status.success());
    let o = pgdm(&["compare", "pg", "other"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    fs::remove_file(tmp.path().join("dir/summary.csv")).unwrap();
    let o = pgdm(&["compare", "pg", "dir"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("summary.csv"), "{}", stderr(&o));
}

#[test]
fn fit_writes_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("counts.csv"), "covariate_id,k1,k2,k3\n0,3,1,0\n2,0,0,4\n1,1,1,1\n").unwrap();
    fs::write(tmp.path().join("coords.csv"), "covariate_id,x1\n0,0\n1,1\n2,2\n").unwrap();
    let o = pgdm(&["fit", "counts.csv", "--coords", "coords.csv", "--em", "--out", "ck.json"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = Checkpoint::from_json(&fs::read_to_string(tmp.path().join("ck.json")).unwrap()).unwrap();
    assert_eq!(ck.counts, vec![vec![3, 1, 0], vec![1, 1, 1], vec![0, 0, 4]]);
    assert_eq!(ck.kernel.distance_matrix[0][2], 2.0);
    assert!(ck.elbo_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));

    fs::write(tmp.path().join("short.csv"), "covariate_id,x1\n0,0\n1,1\n").unwrap();
    let o = pgdm(&["fit", "counts.csv", "--coords", "short.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
