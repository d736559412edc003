//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; tolerances
//! and budgets are fixed here. Tests are serialized so the runtime figures
//! are not distorted by each other.
//!
//! Run with `cargo test -p pto-adjust-cli --test acceptance`.

use std::fs;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use pto_adjust::adjustment::{multi_a_matrix, multi_b_vector, multi_oracle_lambda, pinned_equivalent, MultiStructure};
use pto_adjust::bootstrap::bootstrap_adjust_multi;
use pto_adjust::demand::{derivative_ratio_constant, reward_derivative, surrogate_reward};
use pto_adjust::estimation::{fit, truncate_estimate};
use pto_adjust::numdiff;
use pto_adjust::rng::{derive_key, purpose, substream};
use pto_adjust::simulation::{
    ols_slope, presets, replication_dataset, run_experiment, ExperimentConfig, PolicyKind, RewardKind, SyntheticStudy,
};
use pto_adjust::*;
use pto_adjust_cli::{cmd_run, config_digest, parse_config, RunOverrides};
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, title: &str, ok: bool, elapsed: Duration, budget: Duration, detail: &str) {
    let within = elapsed <= budget;
    let verdict = if ok && within { "PASS" } else { "FAIL" };
    // written to the handle directly so the line shows even when output is captured
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{verdict} criterion {id} ({title}): {detail}; runtime {:.2}s (budget {:.0}s)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    )
    .unwrap();
    out.flush().unwrap();
    drop(out);
    assert!(ok, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} over budget: {:.2}s", elapsed.as_secs_f64());
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn single_reward(m: DemandModel, theta: f64) -> impl Fn(f64) -> f64 {
    move |x| surrogate_reward(&m, &ParamVector::scalar(theta), &ParamVector::scalar(x)).unwrap()
}

/// Second and third derivatives from the standard central stencils.
fn stencil_d2_d3(f: &impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
    let h2 = 1e-4 * x;
    let d2 = (f(x + h2) - 2.0 * f(x) + f(x - h2)) / (h2 * h2);
    let h3 = 2e-3 * x;
    let d3 = (f(x + 2.0 * h3) - 2.0 * f(x + h3) + 2.0 * f(x - h3) - f(x - 2.0 * h3)) / (2.0 * h3 * h3 * h3);
    (d2, d3)
}

#[test]
fn criterion_1_derivative_ratio_constants() {
    let _g = lock();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut ok = derivative_ratio_constant(&DemandModel::linear(60.0).unwrap()).unwrap() == -6.0
        && derivative_ratio_constant(&DemandModel::log_linear(8.0).unwrap()).unwrap() == -4.0;
    for gamma in [0.5, 1.0, 2.0, 5.0] {
        let c = derivative_ratio_constant(&DemandModel::power_law(1.0, gamma).unwrap()).unwrap();
        ok &= (c - -2.0 * (1.0 + 2.0 * gamma) / gamma).abs() <= 1e-15 * c.abs();
    }
    let models = [DemandModel::linear(60.0).unwrap(), DemandModel::log_linear(8.0).unwrap(), DemandModel::power_law(1.0, 2.0).unwrap()];
    let mut points = 0;
    for m in models {
        let c = derivative_ratio_constant(&m).unwrap();
        for theta in [0.5, 1.0, 3.0, 5.0] {
            let (d2, d3) = stencil_d2_d3(&single_reward(m, theta), theta);
            let rel = (theta * d3 / d2 - c).abs() / c.abs();
            worst = worst.max(rel);
            points += 1;
        }
    }
    ok &= points == 12 && worst <= 1e-4;
    report(1, "derivative-ratio constants", ok, start.elapsed(), Duration::from_secs(1), &format!(
        "C = -6, -4, -2(1+2g)/g exact; worst finite-difference deviation {worst:.2e} over {points} points (tol 1e-4)"
    ));
}

#[test]
fn criterion_2_quadratic_gap() {
    let _g = lock();
    let start = Instant::now();
    let study = SyntheticStudy {
        model: DemandModel::linear(1.0).unwrap(),
        theta: 1.0,
        sigma_sq: 1.0,
        draws: 1_000_000,
        floor: 1e-3,
        seed: 2,
        reward: RewardKind::Surrogate,
        antithetic: true,
    };
    let g = study.run(200).unwrap();
    // R'' = -a^2 / (2 theta^3) = -1/2; lambda* = 2 gives -R'' lambda*^2 sigma^4 / (8 theta^2) * 4 = 1
    let (oracle, plugin) = (1.0, 4.0);
    let ratio = g.plugin.mean / g.oracle.mean;
    let ok = (g.oracle.mean - oracle).abs() <= 0.1 * oracle
        && (g.plugin.mean - plugin).abs() <= 0.1 * plugin
        && (3.4..=4.6).contains(&ratio);
    report(2, "quadratic gap", ok, start.elapsed(), Duration::from_secs(30), &format!(
        "n^2 gap oracle {:.4} (expect 1.0 +-10%), plug-in {:.4} (expect 4.0 +-10%), ratio {ratio:.3} (expect [3.4, 4.6])",
        g.oracle.mean, g.plugin.mean
    ));
}

fn uniform_improvement(id: u32, figure: &str) {
    let _g = lock();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut min_z = f64::INFINITY;
    let panels = presets::figure(figure).unwrap();
    for panel in &panels {
        let mut c = panel.config.clone();
        c.replications = 10_000;
        c.seed = 3;
        for r in run_experiment(&c).unwrap() {
            for kind in PolicyKind::ALL {
                let s = r.improvement(kind).unwrap();
                min_z = min_z.min(s.mean / s.stderr);
                if !(s.mean > 0.0) {
                    failures.push(format!("{} n={} {}={:.3e}", panel.name, r.n, kind.column(), s.mean));
                }
            }
            if figure == "fig2" {
                let (o, p) = (r.improvement(PolicyKind::Oracle).unwrap(), r.improvement(PolicyKind::Plugin).unwrap());
                if !(p.mean > o.mean) {
                    failures.push(format!("{} n={} plug-in {:.3e} <= oracle {:.3e}", panel.name, r.n, p.mean, o.mean));
                }
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{figure}: {} panels x 10 sizes x 3 policies positive at 1e4 reps (min z {min_z:.1})", panels.len())
    } else {
        format!("{figure}: {}", failures.join("; "))
    };
    report(id, "uniform improvement", failures.is_empty(), start.elapsed(), Duration::from_secs(300), &detail);
}

#[test]
fn criterion_3_uniform_improvement_linear() {
    uniform_improvement(3, "fig2");
}

#[test]
fn criterion_3_uniform_improvement_log_linear() {
    uniform_improvement(3, "fig4");
}

#[test]
fn criterion_4_inverse_square_scaling() {
    let _g = lock();
    let start = Instant::now();
    let study = SyntheticStudy {
        model: DemandModel::linear(1.0).unwrap(),
        theta: 1.0,
        sigma_sq: 1.0,
        draws: 1_000_000,
        floor: 1e-3,
        seed: 4,
        reward: RewardKind::Realized,
        antithetic: true,
    };
    let ns: Vec<usize> = (1..=10).map(|k| 10 * k).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut positive = true;
    for &n in &ns {
        let raw = study.run(n).unwrap().oracle.mean / (n * n) as f64;
        positive &= raw > 0.0;
        xs.push((n as f64).ln());
        ys.push(raw.ln());
    }
    let slope = ols_slope(&xs, &ys);
    let ok = positive && (-2.4..=-1.6).contains(&slope);
    report(4, "O(n^-2) scaling", ok, start.elapsed(), Duration::from_secs(60), &format!(
        "slope of log improvement on log n = {slope:.3} (expect [-2.4, -1.6])"
    ));
}

#[test]
fn criterion_5_multi_parameter_consistency() {
    let _g = lock();
    let start = Instant::now();
    let m = DemandModel::LinearTwoParam;
    let mut rng = substream(5, &[purpose::CHECK]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (t1, t2) = (rng.random_range(5.0..100.0), rng.random_range(0.5..10.0));
        let (l11, l21, l22) = (rng.random_range(0.5..8.0), rng.random_range(-3.0..3.0), rng.random_range(0.3..3.0));
        let sigma = [[l11 * l11, l11 * l21], [l11 * l21, l21 * l21 + l22 * l22]];
        let theta = ParamVector::pair(t1, t2);
        let f = |x: &[f64]| surrogate_reward(&m, &theta, &ParamVector::pair(x[0], x[1])).unwrap();
        let s = MultiStructure {
            hessian: reward_derivative(&m, &theta, &theta, 2).unwrap().into_matrix().unwrap(),
            sigma: DMatrix::from_fn(2, 2, |i, j| sigma[i][j]),
            third_tensor: Tensor3::from_row_major(2, numdiff::third_tensor(&f, theta.as_slice())),
            theta: DVector::from_column_slice(theta.as_slice()),
        };
        let lambda = multi_oracle_lambda(
            &multi_a_matrix(&s).unwrap(),
            &multi_b_vector(&s).unwrap(),
            pto_adjust::SolveStrategy::PinLast,
        )
        .unwrap();
        let closed = -sigma[0][0] / (t1 * t1) + 3.0 * sigma[0][1] / (t1 * t2) - 2.0 * sigma[1][1] / (t2 * t2);
        worst = worst.max((lambda[0] - closed).abs()).max(lambda[1].abs());
    }
    report(5, "multi-parameter consistency", worst <= 1e-6, start.elapsed(), Duration::from_secs(5), &format!(
        "max |lambda_1 - closed form| over 20 triples = {worst:.2e} (tol 1e-6)"
    ));
}

fn closed_form_lambda1(theta: &ParamVector, s: &[[f64; 2]; 2]) -> f64 {
    let (t1, t2) = (theta.get(0), theta.get(1));
    -s[0][0] / (t1 * t1) + 3.0 * s[0][1] / (t1 * t2) - 2.0 * s[1][1] / (t2 * t2)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn criterion_6_bootstrap_consistency() {
    let _g = lock();
    let start = Instant::now();
    let mut config = ExperimentConfig::new(DemandModel::LinearTwoParam, ParamVector::pair(60.0, 3.0), 10.0, (0.1, 6.0));
    config.seed = 6;
    let deviation = |n: usize| {
        median(
            (0..200)
                .map(|rep| {
                    let data = replication_dataset(&config, n, rep).unwrap();
                    let est = truncate_estimate(fit(&config.model, &data).unwrap(), 1e-3);
                    let bc = BootstrapConfig {
                        seed: derive_key(config.seed, &[purpose::BOOTSTRAP, n as u64, rep as u64]),
                        ..Default::default()
                    };
                    assert_eq!(bc.resamples.resolve(n), 10 * n);
                    let out = bootstrap_adjust_multi(&data, &config.model, &est, &bc).unwrap();
                    let boot = pinned_equivalent(&[out.lambda[0], out.lambda[1]], n);
                    let oracle = closed_form_lambda1(&est.theta_hat, &est.sigma_hat_sq.matrix().unwrap());
                    (boot - oracle).abs()
                })
                .collect(),
        )
    };
    let (small, large) = (deviation(200), deviation(2000));
    report(6, "bootstrap consistency", large < 0.5 * small, start.elapsed(), Duration::from_secs(600), &format!(
        "median |lambda_boot - lambda_oracle(theta_hat)|: n=200 {small:.4}, n=2000 {large:.4} (need ratio < 0.5, got {:.3})",
        large / small
    ));
}

#[test]
fn criterion_7_degenerate_exactness() {
    let _g = lock();
    let start = Instant::now();
    let mut problems = Vec::new();
    let setups = [
        (DemandModel::linear(60.0).unwrap(), ParamVector::scalar(3.0), (0.1, 6.0)),
        (DemandModel::log_linear(8.0).unwrap(), ParamVector::scalar(5.0), (0.05, 1.0)),
        (DemandModel::LinearTwoParam, ParamVector::pair(60.0, 5.0), (0.1, 6.0)),
    ];
    for (model, truth, range) in setups {
        let mut c = ExperimentConfig::new(model, truth, 0.0, range);
        c.replications = 4;
        for r in run_experiment(&c).unwrap() {
            if r.pto_relative.mean != 1.0 {
                problems.push(format!("{} n={} pto {}", model.name(), r.n, r.pto_relative.mean));
            }
            for (k, s) in &r.improvement_by_policy {
                if s.mean != 0.0 {
                    problems.push(format!("{} n={} {} {:e}", model.name(), r.n, k.column(), s.mean));
                }
            }
        }
        for n in [10, 100] {
            let data = replication_dataset(&c, n, 0).unwrap();
            let est = fit(&model, &data).unwrap();
            let lambda = c.policy(PolicyKind::Bootstrap, n, 0).lambda(&model, &data, &est).unwrap();
            if lambda.iter().any(|l| *l != 0.0) {
                problems.push(format!("{} n={n} bootstrap lambda {lambda:?}", model.name()));
            }
        }
    }
    let detail = if problems.is_empty() {
        "noise-free runs: pto = 1, improvements = 0, bootstrap lambda = 0, all exact".to_string()
    } else {
        problems.join("; ")
    };
    report(7, "degenerate exactness", problems.is_empty(), start.elapsed(), Duration::from_secs(1), &detail);
}

#[test]
fn criterion_8_determinism() {
    let _g = lock();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("panel.toml");
    fs::write(&cfg, "preset = \"fig2/theta3sigma10\"\n[experiment]\nreplications = 200\nseed = 8\n").unwrap();
    let digest = config_digest(&parse_config(&fs::read_to_string(&cfg).unwrap()).unwrap());
    let mut outputs = Vec::new();
    for threads in [1, 2, 4] {
        for attempt in 0..2 {
            let out = dir.path().join(format!("t{threads}_{attempt}.csv"));
            cmd_run(&cfg, &out, &RunOverrides { reps: None, seed: None, threads: Some(threads) }).unwrap();
            let manifest: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(dir.path().join(format!("t{threads}_{attempt}.csv.manifest.json"))).unwrap())
                    .unwrap();
            assert_eq!(manifest["config_digest"], digest.as_str());
            outputs.push(fs::read(&out).unwrap());
        }
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    report(8, "determinism", identical, start.elapsed(), Duration::from_secs(120), &format!(
        "6 runs (threads 1, 2, 4; twice each) with digest {}..: byte-identical = {identical}",
        &digest[..12]
    ));
}
