use approx::assert_relative_eq;
use pto_adjust::adjustment::{oracle_lambda_single, pinned_equivalent, two_param_pinned_lambda};
use pto_adjust::bootstrap::*;
use pto_adjust::estimation::{fit, truncate_estimate};
use pto_adjust::rng::substream;
use pto_adjust::simulation::{replication_dataset, ExperimentConfig};
use pto_adjust::*;

fn linear_setup(n: usize, rep: usize) -> (ExperimentConfig, Dataset, EstimateReport) {
    let mut config = ExperimentConfig::new(DemandModel::linear(60.0).unwrap(), ParamVector::scalar(3.0), 10.0, (0.1, 6.0));
    config.seed = 31;
    let data = replication_dataset(&config, n, rep).unwrap();
    let report = truncate_estimate(fit(&config.model, &data).unwrap(), 1e-3);
    (config, data, report)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn wild_resample_moments() {
    let (config, data, report) = linear_setup(8, 0);
    let draws = 100_000;
    let n = data.n();
    let (mut sum, mut sum_sq) = (vec![0.0; n], vec![0.0; n]);
    let mut rng = substream(4, &[0]);
    for _ in 0..draws {
        let star = wild_resample(&data, &config.model, &report, &mut rng).unwrap();
        assert_eq!(star.prices(), data.prices());
        for i in 0..n {
            let dev = star.demands()[i] - (60.0 - report.theta_hat.theta() * data.prices()[i]);
            sum[i] += dev;
            sum_sq[i] += dev * dev;
        }
    }
    for i in 0..n {
        let e2 = report.residuals[i].powi(2);
        let mean = sum[i] / draws as f64;
        let var = sum_sq[i] / draws as f64 - mean * mean;
        assert!(mean.abs() < 5.0 * (e2 / draws as f64).sqrt(), "obs {i}: mean {mean}");
        assert_relative_eq!(var, e2, max_relative = 0.03);
    }
}

#[test]
fn log_linear_resample_stays_positive() {
    let mut config = ExperimentConfig::new(DemandModel::log_linear(8.0).unwrap(), ParamVector::scalar(3.0), 1.0, (0.05, 1.0));
    config.seed = 3;
    let data = replication_dataset(&config, 20, 0).unwrap();
    let report = fit(&config.model, &data).unwrap();
    let star = wild_resample(&data, &config.model, &report, &mut substream(1, &[1])).unwrap();
    assert!(star.demands().iter().all(|d| *d > 0.0));
}

#[test]
fn closed_form_matches_dense_grid() {
    for rep in 0..3 {
        let (config, data, report) = linear_setup(20, rep);
        let bc = BootstrapConfig { seed: rep as u64, ..Default::default() };
        let out = bootstrap_adjust_single(&data, &config.model, &report, &bc).unwrap();
        let draws = bootstrap_estimates(&data, &config.model, &report, &bc).unwrap();
        let init = out.initial[0].abs();
        let step = 1e-4 * init;
        let half = 50_000i64;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in -half..=half {
            let l = k as f64 * step;
            let v = bootstrap_objective(&[l], &draws.estimates, &report.theta_hat, &config.model, data.n()).unwrap();
            if v > best.0 {
                best = (v, l);
            }
        }
        assert!((out.lambda[0] - best.1).abs() <= step, "closed {} grid {}", out.lambda[0], best.1);
    }
}

#[test]
fn search_is_monotone_and_stays_in_domain() {
    let models = [
        (DemandModel::linear(60.0).unwrap(), ParamVector::scalar(3.0), 10.0, (0.1, 6.0)),
        (DemandModel::log_linear(8.0).unwrap(), ParamVector::scalar(5.0), 1.0, (0.05, 1.0)),
        (DemandModel::LinearTwoParam, ParamVector::pair(60.0, 3.0), 15.0, (0.1, 6.0)),
    ];
    for (model, truth, s2, range) in models {
        let config = ExperimentConfig::new(model, truth, s2, range);
        for n in [10, 30] {
            for rep in 0..20 {
                let data = replication_dataset(&config, n, rep).unwrap();
                let report = truncate_estimate(fit(&model, &data).unwrap(), 1e-3);
                let bc = BootstrapConfig { seed: rep as u64, ..Default::default() };
                let out = if model.param_len() == 1 {
                    bootstrap_adjust_single(&data, &model, &report, &bc).unwrap()
                } else {
                    bootstrap_adjust_multi(&data, &model, &report, &bc).unwrap()
                };
                assert_eq!(out.resamples, 10 * n);
                assert!(out.objective >= out.objective_at_zero, "{} n={n} rep={rep}", model.name());
                assert!(out.lambda[0].abs() <= 5.0 * out.initial[0].abs() * (1.0 + 1e-12));
                if model.param_len() == 2 {
                    assert!(out.lambda[1].abs() <= 0.5);
                    assert!(out.rounds >= 1 && out.rounds <= 50);
                }
                let draws = bootstrap_estimates(&data, &model, &report, &bc).unwrap();
                let generic = bootstrap_objective(&out.lambda, &draws.estimates, &report.theta_hat, &model, n).unwrap();
                assert_relative_eq!(generic, out.objective, max_relative = 1e-10);
            }
        }
    }
}

#[test]
fn odd_resample_count_is_exact() {
    let (config, data, report) = linear_setup(15, 0);
    for antithetic in [true, false] {
        let bc = BootstrapConfig { resamples: ResampleCount::Fixed(7), antithetic, ..Default::default() };
        let draws = bootstrap_estimates(&data, &config.model, &report, &bc).unwrap();
        assert_eq!(draws.estimates.len(), 7);
    }
}

#[test]
fn single_bootstrap_approaches_the_oracle_coefficient() {
    let gap_at = |n: usize| {
        median(
            (0..60)
                .map(|rep| {
                    let (config, data, report) = linear_setup(n, rep);
                    let bc = BootstrapConfig { seed: 100 + rep as u64, ..Default::default() };
                    let out = bootstrap_adjust_single(&data, &config.model, &report, &bc).unwrap();
                    let target =
                        oracle_lambda_single(-6.0, report.sigma_hat_sq.scalar().unwrap(), report.theta_hat.theta()).unwrap();
                    (out.lambda[0] - target).abs()
                })
                .collect(),
        )
    };
    let (small, mid, large) = (gap_at(40), gap_at(200), gap_at(1000));
    assert!(mid < small && large < mid, "n=40: {small}, n=200: {mid}, n=1000: {large}");
}

#[test]
fn multi_bootstrap_lands_near_the_oracle() {
    let config = ExperimentConfig::new(DemandModel::LinearTwoParam, ParamVector::pair(60.0, 3.0), 10.0, (0.1, 6.0));
    let n = 1000;
    let sigma = config.true_sigma(n);
    let oracle = two_param_pinned_lambda(&config.true_params, &sigma)[0];
    for rep in 0..3 {
        let data = replication_dataset(&config, n, rep).unwrap();
        let report = truncate_estimate(fit(&config.model, &data).unwrap(), 1e-3);
        let bc = BootstrapConfig { seed: rep as u64, ..Default::default() };
        let out = bootstrap_adjust_multi(&data, &config.model, &report, &bc).unwrap();
        let eff = pinned_equivalent(&[out.lambda[0], out.lambda[1]], n);
        assert!((eff - oracle).abs() <= 0.25 * oracle.abs(), "rep {rep}: {eff} vs {oracle}");
    }
}
