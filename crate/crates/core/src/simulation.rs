//! Monte Carlo comparison of adjustment policies against plain PTO.
//!
//! Every replication draws its noise from a substream addressed by
//! `(seed, n, pair)`, so results do not depend on the number of worker
//! threads. With `antithetic` set, replications `2k` and `2k + 1` share one
//! noise vector with opposite signs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjustment::{apply_adjustment_with_floor, AdjustmentPolicy, SolveStrategy};
use crate::bootstrap::BootstrapConfig;
use crate::demand::{derivative_ratio_constant, optimal_decision, realized_reward, reward_difference, surrogate_reward, DemandModel, ParamVector};
use crate::error::{Error, Result};
use crate::estimation::{fit, truncate_estimate, Dataset, DEFAULT_TRUNCATION_FLOOR};
use crate::rng::{derive_key, purpose, standard_normal, substream};

/// Adjustment policies compared against PTO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Oracle,
    Plugin,
    Bootstrap,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Oracle, PolicyKind::Plugin, PolicyKind::Bootstrap];

    /// CSV column name.
    pub fn column(&self) -> &'static str {
        match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::Plugin => "dd",
            PolicyKind::Bootstrap => "boot",
        }
    }

    pub fn from_column(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(PolicyKind::Oracle),
            "dd" | "plugin" | "plug-in" => Some(PolicyKind::Plugin),
            "boot" | "bootstrap" => Some(PolicyKind::Bootstrap),
            _ => None,
        }
    }
}

/// One experiment: a model, a truth, a noise level and a set of sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: DemandModel,
    pub true_params: ParamVector,
    /// Noise variance, on the log scale for log-linear demand.
    pub noise_var: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub policies: Vec<PolicyKind>,
    pub price_range: (f64, f64),
    pub antithetic: bool,
    pub truncation_floor: f64,
    /// Bootstrap settings; the seed is replaced per replication.
    pub bootstrap: BootstrapConfig,
}

impl ExperimentConfig {
    /// A config with the defaults used throughout: `n = 10, 20, ..., 100`,
    /// 10^4 replications, all policies the model supports.
    pub fn new(model: DemandModel, true_params: ParamVector, noise_var: f64, price_range: (f64, f64)) -> Self {
        let policies = if model.param_len() == 1 {
            PolicyKind::ALL.to_vec()
        } else {
            vec![PolicyKind::Oracle, PolicyKind::Bootstrap]
        };
        Self {
            model,
            true_params,
            noise_var,
            n_grid: (1..=10).map(|k| 10 * k).collect(),
            replications: 10_000,
            seed: 0,
            policies,
            price_range,
            antithetic: true,
            truncation_floor: DEFAULT_TRUNCATION_FLOOR,
            bootstrap: BootstrapConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.model.validate()?;
        if self.true_params.len() != self.model.param_len() {
            return bad(format!(
                "{} needs {} parameter(s), got {}",
                self.model.name(),
                self.model.param_len(),
                self.true_params.len()
            ));
        }
        if let DemandModel::PowerLaw { .. } = self.model {
            return bad("power-law demand has no estimator to simulate".into());
        }
        if !(self.true_params.slope() > 0.0) || self.true_params.as_slice().iter().any(|x| !x.is_finite()) {
            return bad("true slope must be positive and finite".into());
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return bad(format!("noise variance must be nonnegative, got {}", self.noise_var));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < 2) {
            return bad("every sample size must be at least 2".into());
        }
        let (lo, hi) = self.price_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("price range must satisfy 0 < low < high, got [{lo}, {hi}]"));
        }
        if !(self.truncation_floor > 0.0) {
            return bad("truncation floor must be positive".into());
        }
        if self.model.param_len() == 2 && self.policies.contains(&PolicyKind::Plugin) {
            return bad("the plug-in policy exists for single-parameter models only".into());
        }
        self.bootstrap.validate()
    }

    /// n-scaled sampling variance of the estimator on the `n`-point grid,
    /// as a 2x2 matrix (only `[0][0]` is used for single-parameter models).
    pub fn true_sigma(&self, n: usize) -> [[f64; 2]; 2] {
        let prices = price_grid(self.price_range, n);
        let nf = n as f64;
        let sum_p: f64 = prices.iter().sum();
        let sum_p2: f64 = prices.iter().map(|p| p * p).sum();
        if self.model.param_len() == 1 {
            [[self.noise_var * nf / sum_p2, 0.0], [0.0, 0.0]]
        } else {
            let mean = sum_p / nf;
            let sxx: f64 = prices.iter().map(|p| (p - mean) * (p - mean)).sum();
            let s2 = self.noise_var;
            [[s2 * sum_p2 / sxx, s2 * sum_p / sxx], [s2 * sum_p / sxx, s2 * nf / sxx]]
        }
    }

    /// The policy object for `kind` at sample size `n`, replication `rep`.
    pub fn policy(&self, kind: PolicyKind, n: usize, rep: usize) -> AdjustmentPolicy {
        let sigma = self.true_sigma(n);
        match (kind, self.model.param_len()) {
            (PolicyKind::Oracle, 1) => {
                AdjustmentPolicy::OracleSingle { theta: self.true_params.theta(), sigma_sq: sigma[0][0] }
            }
            (PolicyKind::Oracle, _) => {
                AdjustmentPolicy::OracleMulti { strategy: SolveStrategy::PinLast, theta: self.true_params, sigma }
            }
            (PolicyKind::Plugin, _) => AdjustmentPolicy::PluginSingle,
            (PolicyKind::Bootstrap, _) => AdjustmentPolicy::Bootstrap(BootstrapConfig {
                seed: derive_key(self.seed, &[purpose::BOOTSTRAP, n as u64, rep as u64]),
                truncation_floor: self.truncation_floor,
                ..self.bootstrap
            }),
        }
    }
}

/// `n` equally spaced prices from `low` to `high`, both included.
pub fn price_grid((low, high): (f64, f64), n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..n)
            .map(|i| if i == n - 1 { high } else { low + (high - low) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

fn dataset_from_noise(config: &ExperimentConfig, n: usize, noise: impl Iterator<Item = f64>) -> Result<Dataset> {
    let prices = price_grid(config.price_range, n);
    let sd = config.noise_var.sqrt();
    let t = &config.true_params;
    let demands = prices
        .iter()
        .zip(noise)
        .map(|(p, z)| match config.model {
            DemandModel::LinearKnownIntercept { a } => a - t.theta() * p + sd * z,
            DemandModel::LogLinearKnownIntercept { a } => (a - t.theta() * p + sd * z).exp(),
            DemandModel::LinearTwoParam => t.get(0) - t.get(1) * p + sd * z,
            DemandModel::PowerLaw { .. } => f64::NAN,
        })
        .collect();
    Dataset::new(prices, demands)
}

/// One synthetic dataset on the configured price grid with Gaussian noise
/// (added to log-demand for log-linear demand).
pub fn generate_dataset<R: rand::Rng + ?Sized>(config: &ExperimentConfig, n: usize, rng: &mut R) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("dataset needs at least 2 points, got {n}")));
    }
    let noise: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
    dataset_from_noise(config, n, noise.into_iter())
}

/// The dataset used by replication `rep` at sample size `n`.
pub fn replication_dataset(config: &ExperimentConfig, n: usize, rep: usize) -> Result<Dataset> {
    let (stream, sign) = if config.antithetic { (rep / 2, if rep % 2 == 0 { 1.0 } else { -1.0 }) } else { (rep, 1.0) };
    let mut rng = substream(config.seed, &[purpose::DATASET, n as u64, stream as u64]);
    let noise: Vec<f64> = (0..n).map(|_| sign * standard_normal(&mut rng)).collect();
    dataset_from_noise(config, n, noise.into_iter())
}

/// Rewards from one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    /// False when the estimator failed; such replications are only counted.
    pub valid: bool,
    pub optimal_reward: f64,
    pub pto_reward: f64,
    /// Realized reward per policy, in `config.policies` order.
    pub policy_rewards: Vec<f64>,
    /// `R(pto) - R(optimal)`, computed without cancellation.
    pub pto_shortfall: f64,
    /// `R(pi) - R(pto)` per policy, computed without cancellation.
    pub policy_gains: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
    /// Whether the PTO slope estimate hit the truncation floor.
    pub truncated: bool,
}

impl ReplicationOutcome {
    pub fn pto_relative(&self) -> f64 {
        1.0 + self.pto_shortfall / self.optimal_reward
    }

    /// `(R(pi) - R(pto)) / R(pto)`, undefined when PTO earns nothing.
    pub fn improvement(&self, i: usize) -> Option<f64> {
        (self.pto_reward > 0.0).then(|| self.policy_gains[i] / self.pto_reward)
    }
}

/// generate, fit, truncate, adjust, price, reward. Deterministic in
/// `(config.seed, n, rep)`.
pub fn run_replication(config: &ExperimentConfig, n: usize, rep: usize) -> Result<ReplicationOutcome> {
    let model = &config.model;
    let truth = &config.true_params;
    let optimal_reward = realized_reward(model, truth, optimal_decision(model, truth)?)?;
    let data = replication_dataset(config, n, rep)?;
    let report = match fit(model, &data) {
        Ok(r) => truncate_estimate(r, config.truncation_floor),
        Err(Error::SingularDesign(_)) => {
            return Ok(ReplicationOutcome {
                valid: false,
                optimal_reward,
                pto_reward: f64::NAN,
                policy_rewards: vec![f64::NAN; config.policies.len()],
                pto_shortfall: f64::NAN,
                policy_gains: vec![f64::NAN; config.policies.len()],
                lambdas: Vec::new(),
                truncated: false,
            })
        }
        Err(e) => return Err(e),
    };
    let optimal_price = optimal_decision(model, truth)?;
    let pto_price = optimal_decision(model, &report.theta_hat)?;
    let pto_reward = realized_reward(model, truth, pto_price)?;
    let pto_shortfall = reward_difference(model, truth, pto_price, optimal_price)?;
    let k = config.policies.len();
    let (mut policy_rewards, mut policy_gains, mut lambdas) = (Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k));
    for &kind in &config.policies {
        let lambda = config.policy(kind, n, rep).lambda(model, &data, &report)?;
        let adjusted = apply_adjustment_with_floor(&report.theta_hat, &lambda, n, config.truncation_floor);
        let price = optimal_decision(model, &adjusted)?;
        policy_rewards.push(realized_reward(model, truth, price)?);
        policy_gains.push(reward_difference(model, truth, price, pto_price)?);
        lambdas.push(lambda);
    }
    Ok(ReplicationOutcome {
        valid: true,
        optimal_reward,
        pto_reward,
        policy_rewards,
        pto_shortfall,
        policy_gains,
        lambdas,
        truncated: report.truncated,
    })
}

/// Mean and standard error of a Monte Carlo metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    /// Number of values averaged.
    pub count: usize,
}

impl Stat {
    /// Mean of `values` with a standard error computed over consecutive
    /// groups of `group` values (antithetic pairs are not independent).
    pub fn grouped(values: &[Option<f64>], group: usize) -> Self {
        let group = group.max(1);
        let mut sum = 0.0;
        let mut count = 0;
        let mut means = Vec::with_capacity(values.len() / group + 1);
        for chunk in values.chunks(group) {
            let present: Vec<f64> = chunk.iter().flatten().copied().collect();
            if present.is_empty() {
                continue;
            }
            sum += present.iter().sum::<f64>();
            count += present.len();
            means.push(present.iter().sum::<f64>() / present.len() as f64);
        }
        if count == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, count };
        }
        let mean = sum / count as f64;
        let k = means.len();
        let stderr = if k < 2 {
            0.0
        } else {
            let mm = means.iter().sum::<f64>() / k as f64;
            let var = means.iter().map(|m| (m - mm) * (m - mm)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        };
        Self { mean, stderr, count }
    }
}

/// Aggregated results for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub n: usize,
    /// Mean of `R(theta_hat) / R(theta)` under PTO.
    pub pto_relative: Stat,
    /// Mean relative improvement over PTO per policy.
    pub improvement_by_policy: Vec<(PolicyKind, Stat)>,
    /// Fraction of valid replications whose slope estimate was floored.
    pub truncation_rate: f64,
    pub replications: usize,
    pub invalid: usize,
    /// Valid replications where PTO earned zero; they enter `pto_relative`
    /// but not the improvement ratios.
    pub pto_zero: usize,
}

impl MetricsRecord {
    pub fn improvement(&self, kind: PolicyKind) -> Option<Stat> {
        self.improvement_by_policy.iter().find(|(k, _)| *k == kind).map(|(_, s)| *s)
    }

    /// Aggregates outcomes listed in replication order.
    pub fn aggregate(n: usize, policies: &[PolicyKind], outcomes: &[ReplicationOutcome], antithetic: bool) -> Self {
        let group = if antithetic { 2 } else { 1 };
        let valid: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.valid).collect();
        let pto: Vec<Option<f64>> = outcomes.iter().map(|o| o.valid.then(|| o.pto_relative())).collect();
        let improvement_by_policy = policies
            .iter()
            .enumerate()
            .map(|(i, &kind)| {
                let vals: Vec<Option<f64>> =
                    outcomes.iter().map(|o| if o.valid { o.improvement(i) } else { None }).collect();
                (kind, Stat::grouped(&vals, group))
            })
            .collect();
        let truncated = valid.iter().filter(|o| o.truncated).count();
        Self {
            n,
            pto_relative: Stat::grouped(&pto, group),
            improvement_by_policy,
            truncation_rate: if valid.is_empty() { 0.0 } else { truncated as f64 / valid.len() as f64 },
            replications: outcomes.len(),
            invalid: outcomes.len() - valid.len(),
            pto_zero: valid.iter().filter(|o| !(o.pto_reward > 0.0)).count(),
        }
    }
}

/// Runs all replications for every `n` in the grid. Replications run on the
/// current rayon pool; the reduction is sequential in replication order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    config
        .n_grid
        .iter()
        .map(|&n| {
            let outcomes = (0..config.replications)
                .into_par_iter()
                .map(|rep| run_replication(config, n, rep))
                .collect::<Result<Vec<_>>>()?;
            Ok(MetricsRecord::aggregate(n, &config.policies, &outcomes, config.antithetic))
        })
        .collect()
}

/// Reward used to score the synthetic-estimator study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// Unclamped `R_theta(theta_hat)`.
    Surrogate,
    /// `price * max(demand, 0)`.
    Realized,
}

/// Monte Carlo with `theta_hat ~ N(theta, sigma_sq / n)` drawn directly,
/// floored at `floor`, in place of fitting data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStudy {
    pub model: DemandModel,
    pub theta: f64,
    /// n-scaled variance of the synthetic estimator.
    pub sigma_sq: f64,
    pub draws: usize,
    pub floor: f64,
    pub seed: u64,
    pub reward: RewardKind,
    pub antithetic: bool,
}

/// n^2-scaled mean reward gains over PTO at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGap {
    pub n: usize,
    /// `n^2 (E[R(pi_oracle(theta_hat))] - E[R(theta_hat)])`.
    pub oracle: Stat,
    /// Same for the plug-in rule with the known variance `sigma_sq`.
    pub plugin: Stat,
}

impl SyntheticStudy {
    fn reward(&self, truth: &ParamVector, est: f64) -> Result<f64> {
        let est = ParamVector::scalar(est);
        match self.reward {
            RewardKind::Surrogate => surrogate_reward(&self.model, truth, &est),
            RewardKind::Realized => realized_reward(&self.model, truth, optimal_decision(&self.model, &est)?),
        }
    }

    /// Gap estimates at sample size `n`. Draws run in parallel chunks with a
    /// fixed chunking, so the result does not depend on the thread count.
    pub fn run(&self, n: usize) -> Result<SyntheticGap> {
        const CHUNK: usize = 4096;
        if n == 0 || self.draws == 0 {
            return Err(Error::InvalidParameter("synthetic study needs n >= 1 and at least one draw".into()));
        }
        let c = derivative_ratio_constant(&self.model)?;
        let truth = ParamVector::scalar(self.theta);
        let nf = n as f64;
        let lambda_oracle = crate::adjustment::oracle_lambda_single(c, self.sigma_sq, self.theta)?;
        let sd = (self.sigma_sq / nf).sqrt();
        let chunks = self.draws.div_ceil(CHUNK);
        let per_chunk = (0..chunks)
            .into_par_iter()
            .map(|ch| -> Result<Vec<[f64; 2]>> {
                let mut rng = substream(self.seed, &[purpose::SYNTHETIC, n as u64, ch as u64]);
                let len = CHUNK.min(self.draws - ch * CHUNK);
                let mut out = Vec::with_capacity(len);
                let mut z = 0.0;
                for i in 0..len {
                    z = if self.antithetic && i % 2 == 1 { -z } else { standard_normal(&mut rng) };
                    let est = (self.theta + sd * z).max(self.floor);
                    let lambda_plugin = crate::adjustment::plugin_lambda_single(c, self.sigma_sq, est)?;
                    let base = self.reward(&truth, est)?;
                    let adj = |l: f64| (est * (1.0 + l / nf)).max(self.floor);
                    out.push([
                        self.reward(&truth, adj(lambda_oracle))? - base,
                        self.reward(&truth, adj(lambda_plugin))? - base,
                    ]);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let group = if self.antithetic { 2 } else { 1 };
        let scale = nf * nf;
        let column = |k: usize| -> Vec<Option<f64>> {
            per_chunk.iter().flatten().map(|d| Some(d[k] * scale)).collect()
        };
        Ok(SyntheticGap { n, oracle: Stat::grouped(&column(0), group), plugin: Stat::grouped(&column(1), group) })
    }
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Named experiment panels of the three figures.
pub mod presets {
    use super::*;

    /// One panel: a file stem and its config.
    #[derive(Debug, Clone, PartialEq)]
    pub struct Panel {
        pub name: String,
        pub config: ExperimentConfig,
    }

    fn panel(name: String, config: ExperimentConfig) -> Panel {
        Panel { name, config }
    }

    fn fmt_num(x: f64) -> String {
        format!("{x}").replace('.', "p")
    }

    /// Linear demand, `a = 60`, `theta` in {3, 5}, noise variance in {10, 15}.
    pub fn fig2() -> Vec<Panel> {
        let mut out = Vec::new();
        for theta in [3.0, 5.0] {
            for s2 in [10.0, 15.0] {
                let config = ExperimentConfig::new(
                    DemandModel::LinearKnownIntercept { a: 60.0 },
                    ParamVector::scalar(theta),
                    s2,
                    (0.1, 6.0),
                );
                out.push(panel(format!("theta{}sigma{}", fmt_num(theta), fmt_num(s2)), config));
            }
        }
        out
    }

    /// Two-parameter linear demand, `theta = (60, {3, 5})`, noise variance in {10, 15}.
    pub fn fig3() -> Vec<Panel> {
        let mut out = Vec::new();
        for theta in [3.0, 5.0] {
            for s2 in [10.0, 15.0] {
                let config =
                    ExperimentConfig::new(DemandModel::LinearTwoParam, ParamVector::pair(60.0, theta), s2, (0.1, 6.0));
                out.push(panel(format!("theta{}sigma{}", fmt_num(theta), fmt_num(s2)), config));
            }
        }
        out
    }

    /// Log-linear demand, `a = 8`, `theta` in {3, 5}, log-noise variance in {0.5, 1}.
    pub fn fig4() -> Vec<Panel> {
        let mut out = Vec::new();
        for theta in [3.0, 5.0] {
            for s2 in [0.5, 1.0] {
                let config = ExperimentConfig::new(
                    DemandModel::LogLinearKnownIntercept { a: 8.0 },
                    ParamVector::scalar(theta),
                    s2,
                    (0.05, 1.0),
                );
                out.push(panel(format!("theta{}sigma{}", fmt_num(theta), fmt_num(s2)), config));
            }
        }
        out
    }

    pub fn figure(id: &str) -> Option<Vec<Panel>> {
        match id {
            "fig2" => Some(fig2()),
            "fig3" => Some(fig3()),
            "fig4" => Some(fig4()),
            _ => None,
        }
    }
}
