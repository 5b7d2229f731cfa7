//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Criteria can be selected by number:
//! `cargo test --release --test acceptance -- 4 7`.

mod common;

use std::time::{Duration, Instant};

use pgdm::agents::{
    hellinger, optimal_policy, policy_evaluation, softmax_policy, value_loss, ModelKind, PolicyMatrix, PsrlVariant,
};
use pgdm::envs::{
    build_grid10, build_gridworld, build_queue_env, queue_exact_row, queue_step, GridSpec, QueueNetSpec, QueueVariant,
    RewardCell, TabularMdp,
};
use pgdm::experiments::{
    run_brl_grid10, run_brl_queueing, run_imitation, run_subgoal, run_sysid, subgoal_layout, BrlGrid10Params,
    BrlQueueingParams, ImitationParams, SubgoalEstimator, SubgoalParams, SysidParams,
};
use pgdm::kernels::KernelParam;
use pgdm::pgvi::{
    elbo, elbo_grad, expected_probs, fit, m_step_theta_scale, update_factor, update_omega, FitOptions,
    VariationalPosterior,
};
use pgdm::rng::SeedTree;
use pgdm::{compute_stick_stats, KernelSpec};
use rand::Rng;

const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn nondecreasing(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - slack * w[0].abs().max(1.0))
}

// 1. ELBO monotonicity over coordinate steps, sweeps and EM steps.
fn elbo_monotonicity() -> Outcome {
    let mut rng = SeedTree::new(1).stream("instances");
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for i in 0..50 {
        let inst = common::random_instance(&mut rng, 20, 5, 100);
        // Single coordinate steps from the prior.
        let mut post = VariationalPosterior::from_prior(&inst.hyper, compute_stick_stats(&inst.counts)).unwrap();
        let mut steps = vec![elbo(&post, &inst.hyper).unwrap()];
        for _ in 0..5 {
            update_omega(&mut post);
            steps.push(elbo(&post, &inst.hyper).unwrap());
            for k in 0..post.n_factors() {
                update_factor(k, &inst.hyper, &mut post).unwrap();
                steps.push(elbo(&post, &inst.hyper).unwrap());
            }
        }
        // Full fits with every kind of M-step.
        let opts = FitOptions {
            max_sweeps: 200,
            tol: 1e-12,
            em_enabled: true,
            em_update_mean: i % 2 == 0,
            optimize_lengthscale: i % 3 == 0,
        };
        let res = fit(&inst.counts, inst.hyper.clone(), &opts).unwrap();
        for trace in [&steps, &res.elbo_trace] {
            for w in trace.windows(2) {
                worst = worst.max((w[0] - w[1]) / w[0].abs().max(1.0));
            }
            if !nondecreasing(trace, 1e-8) {
                failures += 1;
            }
        }
    }
    outcome(failures == 0, format!("50 instances, {failures} nonmonotone traces, worst relative drop {worst:.2e}"))
}

// 2. VI against one-dimensional quadrature for C=1, K=2.
fn oracle_posterior() -> Outcome {
    let mut rng = SeedTree::new(2).stream("instances");
    let mut worst_mean = 0.0_f64;
    let mut bound_violations = 0;
    for _ in 0..20 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let theta: f64 = rng.random_range(0.3..4.0);
        let n: u64 = rng.random_range(0..=50);
        let x: u64 = rng.random_range(0..=n);
        let kernel = KernelSpec::new(theta, 1.0, nalgebra::DMatrix::zeros(1, 1)).unwrap();
        let hyper = pgdm::HyperParams::new(vec![nalgebra::DVector::from_element(1, mu)], kernel).unwrap();
        let counts = pgdm::CountMatrix::from_rows(&[vec![x, n - x]]).unwrap();
        let res = fit(&counts, hyper, &FitOptions { max_sweeps: 5000, tol: 1e-14, ..FitOptions::default() }).unwrap();
        let p = expected_probs(&res.posterior)[(0, 0)];
        let (log_z, mean) = common::binomial_oracle(mu, theta, n, x);
        worst_mean = worst_mean.max((p - mean).abs());
        if *res.elbo_trace.last().unwrap() > log_z + 1e-9 {
            bound_violations += 1;
        }
    }
    outcome(
        worst_mean <= 0.03 && bound_violations == 0,
        format!("20 instances, max |mean error| {worst_mean:.4} (tol 0.03), {bound_violations} ELBO > log-evidence"),
    )
}

fn with_param(hyper: &pgdm::HyperParams, param: KernelParam, value: f64) -> pgdm::HyperParams {
    let mut h = hyper.clone();
    match param {
        KernelParam::Scale => h.set_theta(value).unwrap(),
        KernelParam::Lengthscale => h.set_lengthscale(value).unwrap(),
    }
    h
}

// 3. Hyper-parameter gradients against central differences; closed-form scale.
fn gradient_checks() -> Outcome {
    let mut rng = SeedTree::new(3).stream("instances");
    let h = 1e-5;
    let mut worst_rel = 0.0_f64;
    let mut worst_stationary = 0.0_f64;
    for _ in 0..20 {
        let inst = common::random_instance(&mut rng, 12, 4, 30);
        let opts = FitOptions { max_sweeps: 20, tol: 0.0, ..FitOptions::default() };
        let res = fit(&inst.counts, inst.hyper.clone(), &opts).unwrap();
        let post = &res.posterior;
        for param in [KernelParam::Scale, KernelParam::Lengthscale] {
            let value = match param {
                KernelParam::Scale => res.hyper.theta(),
                KernelParam::Lengthscale => res.hyper.lengthscale(),
            };
            let g = elbo_grad(post, &res.hyper, param).unwrap();
            let up = elbo(post, &with_param(&res.hyper, param, value + h)).unwrap();
            let down = elbo(post, &with_param(&res.hyper, param, value - h)).unwrap();
            let fd = (up - down) / (2.0 * h);
            worst_rel = worst_rel.max((g - fd).abs() / fd.abs().max(g.abs()).max(1e-3));
        }
        let theta = m_step_theta_scale(post, &res.hyper).unwrap();
        let at_opt = with_param(&res.hyper, KernelParam::Scale, theta);
        worst_stationary = worst_stationary.max(elbo_grad(post, &at_opt, KernelParam::Scale).unwrap().abs());
    }
    outcome(
        worst_rel < 1e-4 && worst_stationary < 1e-6,
        format!("20 instances, worst relative gradient error {worst_rel:.2e}, |dL/dtheta| at closed form {worst_stationary:.2e}"),
    )
}

// 4. Imitation learning on the random-reward gridworld.
fn imitation() -> Outcome {
    let params = ImitationParams::default();
    let (mut h_wins, mut v_wins) = (0, 0);
    let mut improvement = Vec::new();
    for seed in 0..SEEDS {
        let pg = run_imitation(&params, ModelKind::Pg, seed).unwrap();
        let dir = run_imitation(&params, ModelKind::Dirichlet, seed).unwrap();
        h_wins += (pg.mean_hellinger < dir.mean_hellinger) as usize;
        v_wins += (pg.value_loss < dir.value_loss) as usize;
        improvement.push((dir.mean_hellinger - pg.mean_hellinger) / dir.mean_hellinger);
    }
    let med = median(improvement);
    outcome(
        h_wins >= 9 && v_wins >= 9 && med >= 0.2,
        format!(
            "Hellinger wins {h_wins}/10, value-loss wins {v_wins}/10, median Hellinger improvement {:.1}%",
            100.0 * med
        ),
    )
}

// 5. Subgoal extraction on the two-room grid.
fn subgoal() -> Outcome {
    let params = SubgoalParams::default();
    let imitation = SubgoalParams { estimator: SubgoalEstimator::Imitation, ..params.clone() };
    let mut wins = 0;
    let mut margins = Vec::new();
    for seed in 0..SEEDS {
        let pg = run_subgoal(&params, ModelKind::Pg, seed).unwrap().mean_hellinger;
        let pg_im = run_subgoal(&imitation, ModelKind::Pg, seed).unwrap().mean_hellinger;
        let dir = run_subgoal(&params, ModelKind::Dirichlet, seed).unwrap().mean_hellinger;
        wins += (pg < pg_im && pg < dir) as usize;
        margins.push(pg_im.min(dir) - pg);
    }
    outcome(wins >= 8, format!("PG subgoal best in {wins}/10 seeds, median margin {:.4}", median(margins)))
}

// 6. System identification from a random walk on Grid10.
fn sysid() -> Outcome {
    let params = SysidParams::default();
    let mut wins = vec![0; params.checkpoints.len()];
    for seed in 0..SEEDS {
        let pg = run_sysid(&params, ModelKind::Pg, seed).unwrap();
        let dir = run_sysid(&params, ModelKind::Dirichlet, seed).unwrap();
        for (i, (a, b)) in pg.checkpoints.iter().zip(&dir.checkpoints).enumerate() {
            wins[i] += (a.1 < b.1) as usize;
        }
    }
    let pass = params.checkpoints.iter().zip(&wins).all(|(&t, &w)| t < 500 || w >= 9);
    let detail = params.checkpoints.iter().zip(&wins).map(|(t, w)| format!("{t}: {w}/10")).collect::<Vec<_>>();
    outcome(pass, format!("PG wins per checkpoint [{}]", detail.join(", ")))
}

fn transitions_to(level: f64, trace: &pgdm::agents::PsrlTrace) -> f64 {
    trace.first_reaching(level).map_or(f64::INFINITY, |t| t as f64)
}

// 7. PSRL on Grid10, both variants.
fn brl() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for variant in [PsrlVariant::Sampled, PsrlVariant::Mean] {
        // Stopping at 90% leaves the first-reaching time unchanged.
        let params = BrlGrid10Params { variant, stop_at: Some(0.9), ..BrlGrid10Params::default() };
        let (mut pg, mut dir) = (Vec::new(), Vec::new());
        for seed in 0..SEEDS {
            pg.push(transitions_to(0.9, &run_brl_grid10(&params, ModelKind::Pg, seed).unwrap().trace));
            dir.push(transitions_to(0.9, &run_brl_grid10(&params, ModelKind::Dirichlet, seed).unwrap().trace));
        }
        let (mp, md) = (median(pg), median(dir));
        pass &= mp < md;
        parts.push(format!("{variant:?}: median transitions to 90% PG {mp} vs Dirichlet {md}"));
    }
    outcome(pass, format!("{} (horizon {}; inf = never)", parts.join("; "), BrlGrid10Params::default().horizon))
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

// 8. Queueing network scheduling plus simulator cross-check.
fn queueing() -> Outcome {
    let params = BrlQueueingParams::default();
    let mut wins = 0;
    for seed in 0..SEEDS {
        let pg = run_brl_queueing(&params, ModelKind::Pg, seed).unwrap();
        let dir = run_brl_queueing(&params, ModelKind::Dirichlet, seed).unwrap();
        wins += (pg.trace.value.last() > dir.trace.value.last()) as usize;
    }
    let spec = &params.queue;
    let mut rng = SeedTree::new(8).stream("queue-mc");
    let mut worst_tv = 0.0_f64;
    for _ in 0..10 {
        let s = rng.random_range(0..spec.n_states());
        let a = rng.random_range(0..2);
        let b = spec.state_of(s);
        let exact = queue_exact_row(spec, b, a);
        let mut freq = vec![0.0; spec.n_states()];
        let n = 100_000;
        for _ in 0..n {
            freq[spec.index_of(queue_step(spec, b, a, &mut rng).0)] += 1.0 / n as f64;
        }
        worst_tv = worst_tv.max(total_variation(&freq, &exact));
    }
    outcome(
        wins >= 8 && worst_tv < 0.02,
        format!("PG return higher in {wins}/10 seeds; worst simulator TV {worst_tv:.4} over 10 rows"),
    )
}

fn check_stochastic(mdp: &TabularMdp, what: &str, errors: &mut Vec<String>) {
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.row(s, a);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                errors.push(format!("{what}: row ({s},{a}) sums to {sum}"));
            }
        }
    }
}

// 9. Environment and metric invariants.
fn unit_invariants() -> Outcome {
    let mut errors = Vec::new();
    let mut rng = SeedTree::new(9).stream("invariants");

    // Row-stochasticity of every environment family.
    let mut mdps = Vec::new();
    for (w, h) in [(1, 2), (3, 3), (5, 4), (10, 10)] {
        let spec = GridSpec { rewards: vec![RewardCell { cell: [w - 1, h - 1], value: 1.0 }], ..GridSpec::empty(w, h) };
        mdps.push((format!("empty {w}x{h}"), build_gridworld(&spec).unwrap().env.mdp));
    }
    let walled = GridSpec {
        walls: subgoal_layout(10, 10),
        rewards: vec![RewardCell { cell: [1, 1], value: 1.0 }],
        ..GridSpec::empty(10, 10)
    };
    mdps.push(("two rooms".into(), build_gridworld(&walled).unwrap().env.mdp));
    mdps.push(("grid10".into(), build_grid10(10, 10, 0.5, 0.95).unwrap().env.mdp));
    for variant in [QueueVariant::Literal, QueueVariant::Conserving] {
        let spec = QueueNetSpec { variant, ..QueueNetSpec::default() };
        let env = build_queue_env(&spec).unwrap();
        for a in 0..2 {
            for s in 0..spec.n_states() {
                let sum: f64 = env.physical[a].row(s).sum();
                if (sum - 1.0).abs() > 1e-10 {
                    errors.push(format!("queue {variant:?}: exact row ({s},{a}) sums to {sum}"));
                }
            }
        }
        mdps.push((format!("queue {variant:?}"), env.mdp));
    }
    for (name, mdp) in &mdps {
        check_stochastic(mdp, name, &mut errors);
    }

    // Mirror symmetry of north and south on an empty grid.
    let world =
        build_gridworld(&GridSpec { rewards: vec![RewardCell { cell: [0, 0], value: 1.0 }], ..GridSpec::empty(6, 5) })
            .unwrap();
    let g = &world.geometry;
    for x in 0..6 {
        for y in 0..5 {
            let north = &world.env.physical[0];
            let south = &world.env.physical[2];
            for tx in 0..6 {
                for ty in 0..5 {
                    let a = north[(g.index(x, y), g.index(tx, ty))];
                    let b = south[(g.index(x, 4 - y), g.index(tx, 4 - ty))];
                    if (a - b).abs() > 1e-12 {
                        errors.push(format!("mirror symmetry broken at ({x},{y})->({tx},{ty})"));
                    }
                }
            }
        }
    }

    // Hellinger distance bounds, identity, symmetry and disjoint supports.
    for _ in 0..2000 {
        let n = rng.random_range(1..12);
        let mut draw = |sparse: bool| {
            let mut v: Vec<f64> =
                (0..n).map(|_| if sparse && rng.random::<f64>() < 0.5 { 0.0 } else { rng.random() }).collect();
            if v.iter().sum::<f64>() == 0.0 {
                v[0] = 1.0;
            }
            let t: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= t);
            v
        };
        let p = draw(true);
        let q = draw(true);
        let d = hellinger(&p, &q);
        if !(0.0..=1.0 + 1e-12).contains(&d) || (d - hellinger(&q, &p)).abs() > 1e-15 || hellinger(&p, &p) > 1e-7 {
            errors.push(format!("Hellinger invariant broken for {p:?} {q:?}"));
        }
    }
    if (hellinger(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() > 1e-15 {
        errors.push("disjoint supports must have Hellinger distance 1".into());
    }

    // Softmax keeps the argmax set for every positive temperature.
    for _ in 0..500 {
        let (s, a) = (rng.random_range(1..6), rng.random_range(1..6));
        let q = nalgebra::DMatrix::from_fn(s, a, |_, _| f64::from(rng.random_range(-3..4)) * 0.5);
        let beta = [1e-3, 0.5, 2.0, 5.0, 50.0, f64::INFINITY][rng.random_range(0..6)];
        let pi = softmax_policy(&q, beta).unwrap();
        for r in 0..s {
            let qmax = q.row(r).max();
            let pmax = pi.probs.row(r).max();
            for c in 0..a {
                let is_q = q[(r, c)] == qmax;
                let is_p = (pi.probs[(r, c)] - pmax).abs() <= 1e-12 * pmax;
                if is_q != is_p {
                    errors.push(format!("softmax argmax mismatch at beta {beta}"));
                }
            }
        }
    }

    // Value loss is nonnegative for arbitrary policies and zero at the optimum.
    for (name, mdp) in mdps.iter().take(6) {
        let opt = optimal_policy(mdp).unwrap();
        if value_loss(&opt, mdp).unwrap().abs() > 1e-9 {
            errors.push(format!("{name}: optimal policy has nonzero value loss"));
        }
        for _ in 0..20 {
            let w = nalgebra::DMatrix::from_fn(mdp.n_states, mdp.n_actions, |_, _| rng.random::<f64>().powi(4));
            let pi = PolicyMatrix::from_weights(w).unwrap();
            let loss = value_loss(&pi, mdp).unwrap();
            let v = policy_evaluation(mdp, &pi).unwrap();
            if loss < -1e-9 || !v.iter().all(|x| x.is_finite()) {
                errors.push(format!("{name}: negative value loss {loss}"));
            }
        }
    }

    let n = errors.len();
    let first = errors.first().cloned().unwrap_or_default();
    outcome(n == 0, if n == 0 { "all invariants hold".to_string() } else { format!("{n} violations, first: {first}") })
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "ELBO monotonicity", elbo_monotonicity, Duration::from_secs(60)),
        (2, "oracle posterior", oracle_posterior, Duration::from_secs(60)),
        (3, "gradient checks", gradient_checks, Duration::from_secs(60)),
        (4, "imitation", imitation, Duration::from_secs(5 * 60)),
        (5, "subgoal", subgoal, Duration::from_secs(10 * 60)),
        (6, "system identification", sysid, Duration::from_secs(10 * 60)),
        (7, "Bayesian RL on Grid10", brl, Duration::from_secs(15 * 60)),
        (8, "queueing", queueing, Duration::from_secs(15 * 60)),
        (9, "environment and metric invariants", unit_invariants, Duration::from_secs(60)),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run, budget) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = out.pass && in_time;
        failed += (!pass) as usize;
        println!(
            "criterion {id} {name}: {} ({}; {:.1}s of {}s{})",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over time budget" }
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
