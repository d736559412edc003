//! Wild-bootstrap estimation of the adjustment coefficient.
//!
//! The bootstrap treats the fitted model as the truth, regenerates demand by
//! multiplying each residual with an independent standard normal, refits,
//! and picks the adjustment that maximizes the average surrogate reward of
//! the adjusted bootstrap estimates.
//!
//! Every estimator used here is linear in the responses, so a bootstrap
//! estimate is `theta_hat + sum_i w_i v_i e_i` for fixed weights `w`. The
//! search works directly on those estimates instead of materializing
//! datasets; [`wild_resample`] is the dataset-level equivalent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjustment::{apply_adjustment_with_floor, plugin_lambda_single, two_param_pinned_lambda};
use crate::demand::{derivative_ratio_constant, surrogate_reward, DemandModel, ParamVector};
use crate::error::{Error, Result};
use crate::estimation::{Dataset, EstimateReport, TwoParamDesign, Variance, DEFAULT_TRUNCATION_FLOOR};
use crate::rng::{purpose, standard_normal, substream};

/// Number of bootstrap resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleCount {
    Fixed(usize),
    /// `k * n` resamples for a dataset of size `n`.
    PerObservation(usize),
}

impl ResampleCount {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            ResampleCount::Fixed(b) => b,
            ResampleCount::PerObservation(k) => k * n,
        }
    }
}

/// Settings for the bootstrap search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: ResampleCount,
    /// Half-width of the search domain as a multiple of the initial estimate.
    pub search_halfwidth_mult: f64,
    /// Grid step as a multiple of the initial estimate.
    pub grid_step_mult: f64,
    /// Half-width of the absolute grid for the second coordinate.
    pub secondary_halfwidth: f64,
    pub secondary_step: f64,
    pub max_coord_rounds: usize,
    pub seed: u64,
    /// Pair every multiplier vector `v` with `-v`.
    pub antithetic: bool,
    /// Slope floor applied to bootstrap estimates and adjusted estimates.
    pub truncation_floor: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: ResampleCount::PerObservation(10),
            search_halfwidth_mult: 5.0,
            grid_step_mult: 0.1,
            secondary_halfwidth: 0.5,
            secondary_step: 0.01,
            max_coord_rounds: 50,
            seed: 0,
            antithetic: true,
            truncation_floor: DEFAULT_TRUNCATION_FLOOR,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        match self.resamples {
            ResampleCount::Fixed(0) | ResampleCount::PerObservation(0) => return bad("resample count must be at least 1"),
            _ => {}
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.search_halfwidth_mult) {
            return bad("search half-width multiplier must be positive");
        }
        if !positive(self.grid_step_mult) {
            return bad("grid step multiplier must be positive");
        }
        if !positive(self.secondary_halfwidth) || !positive(self.secondary_step) {
            return bad("secondary grid half-width and step must be positive");
        }
        if !positive(self.truncation_floor) {
            return bad("truncation floor must be positive");
        }
        Ok(())
    }
}

/// Result of a bootstrap search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub lambda: Vec<f64>,
    /// Initial (plug-in) estimate that sets the search domain.
    pub initial: Vec<f64>,
    /// Number of bootstrap estimates drawn; zero when the domain is degenerate.
    pub resamples: usize,
    /// Bootstrap estimates whose slope was raised to the floor.
    pub truncated: usize,
    /// Coordinate-descent rounds run (zero for single-parameter models).
    pub rounds: usize,
    pub objective: f64,
    pub objective_at_zero: f64,
}

impl BootstrapOutcome {
    fn degenerate(m: usize) -> Self {
        Self {
            lambda: vec![0.0; m],
            initial: vec![0.0; m],
            resamples: 0,
            truncated: 0,
            rounds: 0,
            objective: f64::NAN,
            objective_at_zero: f64::NAN,
        }
    }
}

/// Response-scale fitted values `y_hat_i` of `report` under `model`.
fn fitted_responses(model: &DemandModel, prices: &[f64], theta: &ParamVector) -> Result<Vec<f64>> {
    match *model {
        DemandModel::LinearKnownIntercept { a } | DemandModel::LogLinearKnownIntercept { a } => {
            Ok(prices.iter().map(|p| a - theta.theta() * p).collect())
        }
        DemandModel::LinearTwoParam => Ok(prices.iter().map(|p| theta.get(0) - theta.get(1) * p).collect()),
        DemandModel::PowerLaw { .. } => Err(Error::UnsupportedVariant {
            model: model.name(),
            reason: "no least-squares estimator for power-law demand".into(),
        }),
    }
}

fn check_report(model: &DemandModel, data: &Dataset, report: &EstimateReport) -> Result<()> {
    if report.theta_hat.len() != model.param_len() {
        return Err(Error::DimensionMismatch { expected: model.param_len(), found: report.theta_hat.len() });
    }
    if report.residuals.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), found: report.residuals.len() });
    }
    Ok(())
}

/// One wild-bootstrap dataset: same prices, demand `y_hat_i + v_i e_i` with
/// `v_i ~ N(0, 1)`, built in log space for log-linear demand.
pub fn wild_resample<R: Rng + ?Sized>(
    data: &Dataset,
    model: &DemandModel,
    report: &EstimateReport,
    rng: &mut R,
) -> Result<Dataset> {
    check_report(model, data, report)?;
    let fitted = fitted_responses(model, data.prices(), &report.theta_hat)?;
    let log_scale = matches!(model, DemandModel::LogLinearKnownIntercept { .. });
    let demands = fitted
        .iter()
        .zip(&report.residuals)
        .map(|(y, e)| {
            let y = y + standard_normal(rng) * e;
            if log_scale {
                y.exp()
            } else {
                y
            }
        })
        .collect();
    Dataset::new(data.prices().to_vec(), demands)
}

/// Bootstrap estimates with the count of floored slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub estimates: Vec<ParamVector>,
    pub truncated: usize,
}

/// Draws the bootstrap estimates used by the search, with their slopes
/// floored at `config.truncation_floor`.
///
/// Multiplier vectors come from per-index substreams of `config.seed`; with
/// `antithetic`, index `j` feeds estimates `2j` (`v`) and `2j + 1` (`-v`).
pub fn bootstrap_estimates(
    data: &Dataset,
    model: &DemandModel,
    report: &EstimateReport,
    config: &BootstrapConfig,
) -> Result<BootstrapDraws> {
    config.validate()?;
    check_report(model, data, report)?;
    let b = config.resamples.resolve(data.n());
    let floor = config.truncation_floor;
    let e = &report.residuals;
    let theta = report.theta_hat;
    // weights[c][i]: sensitivity of coordinate c to v_i
    let weights: Vec<Vec<f64>> = match model {
        DemandModel::LinearKnownIntercept { .. } | DemandModel::LogLinearKnownIntercept { .. } => {
            let sum_p2: f64 = data.prices().iter().map(|p| p * p).sum();
            vec![data.prices().iter().zip(e).map(|(p, e)| -p * e / sum_p2).collect()]
        }
        DemandModel::LinearTwoParam => {
            let (w1, w2) = TwoParamDesign::new(data.prices())?.influence(e);
            vec![w1, w2]
        }
        DemandModel::PowerLaw { .. } => {
            return Err(Error::UnsupportedVariant {
                model: model.name(),
                reason: "no least-squares estimator for power-law demand".into(),
            })
        }
    };
    let m = weights.len();
    let mut estimates = Vec::with_capacity(b);
    let mut truncated = 0;
    let mut push = |sign: f64, delta: &[f64; 2], estimates: &mut Vec<ParamVector>| {
        let mut t = theta;
        for (c, x) in t.as_mut_slice().iter_mut().enumerate() {
            *x += sign * delta[c];
        }
        let i = t.slope_index();
        if !(t.get(i) >= floor) {
            t.as_mut_slice()[i] = floor;
            truncated += 1;
        }
        estimates.push(t);
    };
    let streams = if config.antithetic { b.div_ceil(2) } else { b };
    for j in 0..streams {
        let mut rng = substream(config.seed, &[purpose::BOOTSTRAP, j as u64]);
        let mut delta = [0.0; 2];
        if m == 1 {
            for w in &weights[0] {
                delta[0] += w * standard_normal(&mut rng);
            }
        } else {
            for (w1, w2) in weights[0].iter().zip(&weights[1]) {
                let v = standard_normal(&mut rng);
                delta[0] += w1 * v;
                delta[1] += w2 * v;
            }
        }
        push(1.0, &delta, &mut estimates);
        if config.antithetic && estimates.len() < b {
            push(-1.0, &delta, &mut estimates);
        }
    }
    Ok(BootstrapDraws { estimates, truncated })
}

/// Mean surrogate reward, with `anchor` as the truth, of the bootstrap
/// estimates adjusted by `lambda`.
pub fn bootstrap_objective(
    lambda: &[f64],
    boot_estimates: &[ParamVector],
    anchor: &ParamVector,
    model: &DemandModel,
    n: usize,
) -> Result<f64> {
    if boot_estimates.is_empty() {
        return Err(Error::InvalidParameter("no bootstrap estimates".into()));
    }
    let mut sum = 0.0;
    for est in boot_estimates {
        let adjusted = apply_adjustment_with_floor(est, lambda, n, DEFAULT_TRUNCATION_FLOOR);
        sum += surrogate_reward(model, anchor, &adjusted)?;
    }
    Ok(sum / boot_estimates.len() as f64)
}

/// Objective evaluation specialized per model family. Falls back to the
/// generic evaluation wherever the slope floor would bind.
struct Objective<'a> {
    model: DemandModel,
    anchor: ParamVector,
    estimates: &'a [ParamVector],
    n: f64,
    floor: f64,
    min_slope: f64,
    /// Means of `1/t`, `1/t^2` (linear) or of `r`, `r^2` (two-parameter).
    moments: [f64; 2],
    inv_slopes: Vec<f64>,
    /// Log-linear: `mean(delta^k) / k!` with `delta = theta_hat / t - 1`.
    delta_moments: Vec<f64>,
    max_abs_delta: f64,
}

/// Terms of the log-linear moment expansion.
const SERIES_TERMS: usize = 28;
/// The expansion is used while `u * max |delta|` stays below this bound;
/// the truncation error is then below 1e-18 relative.
const SERIES_RADIUS: f64 = 1.5;

impl<'a> Objective<'a> {
    fn new(model: &DemandModel, anchor: ParamVector, estimates: &'a [ParamVector], n: usize, floor: f64) -> Self {
        let min_slope = estimates.iter().map(|t| t.slope()).fold(f64::INFINITY, f64::min);
        let count = estimates.len() as f64;
        let mut moments = [0.0; 2];
        let mut inv_slopes = Vec::new();
        match model {
            DemandModel::LinearKnownIntercept { .. } => {
                for t in estimates {
                    let w = 1.0 / t.theta();
                    moments[0] += w;
                    moments[1] += w * w;
                }
            }
            DemandModel::LinearTwoParam => {
                for t in estimates {
                    let r = t.get(0) / t.get(1);
                    moments[0] += r;
                    moments[1] += r * r;
                }
            }
            _ => inv_slopes = estimates.iter().map(|t| 1.0 / t.theta()).collect(),
        }
        let mut delta_moments = Vec::new();
        let mut max_abs_delta = f64::INFINITY;
        if let DemandModel::LogLinearKnownIntercept { .. } = model {
            delta_moments = vec![0.0; SERIES_TERMS];
            max_abs_delta = 0.0;
            for w in &inv_slopes {
                let d = anchor.theta() * w - 1.0;
                max_abs_delta = f64::max(max_abs_delta, d.abs());
                let mut term = 1.0;
                for (k, m) in delta_moments.iter_mut().enumerate() {
                    *m += term;
                    term *= d / (k + 1) as f64;
                }
            }
            for m in &mut delta_moments {
                *m /= count;
            }
        }
        Self {
            model: *model,
            anchor,
            estimates,
            n: n as f64,
            floor,
            min_slope,
            moments: moments.map(|m| m / count),
            inv_slopes,
            delta_moments,
            max_abs_delta,
        }
    }

    fn generic(&self, lambda: &[f64]) -> f64 {
        let mut sum = 0.0;
        for est in self.estimates {
            let adjusted = apply_adjustment_with_floor(est, lambda, self.n as usize, self.floor);
            match surrogate_reward(&self.model, &self.anchor, &adjusted) {
                Ok(r) => sum += r,
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        sum / self.estimates.len() as f64
    }

    fn eval(&self, lambda: &[f64]) -> f64 {
        let scale_slope = 1.0 + lambda[lambda.len() - 1] / self.n;
        if !(self.min_slope * scale_slope >= self.floor) {
            return self.generic(lambda);
        }
        match self.model {
            DemandModel::LinearKnownIntercept { a } => {
                let u = 1.0 / scale_slope;
                let a2 = a * a;
                a2 * u * self.moments[0] / 2.0 - a2 * self.anchor.theta() * u * u * self.moments[1] / 4.0
            }
            DemandModel::LinearTwoParam => {
                let s = (1.0 + lambda[0] / self.n) / scale_slope;
                self.anchor.get(0) * s * self.moments[0] / 2.0 - self.anchor.get(1) * s * s * self.moments[1] / 4.0
            }
            DemandModel::LogLinearKnownIntercept { a } if self.max_abs_delta / scale_slope <= SERIES_RADIUS => {
                // mean g(t u) for g(x) = x e^-x, t = 1 + delta, expanded in delta:
                // g^(k)(u) = (-1)^k (u - k) e^-u
                let u = 1.0 / scale_slope;
                let mut sum = 0.0;
                let mut pow = 1.0;
                for (k, m) in self.delta_moments.iter().enumerate() {
                    sum += pow * (u - k as f64) * m;
                    pow *= -u;
                }
                (a - u).exp() * sum / self.anchor.theta()
            }
            DemandModel::LogLinearKnownIntercept { a } => {
                let u = 1.0 / scale_slope;
                let theta = self.anchor.theta();
                let sum: f64 = self.inv_slopes.iter().map(|w| {
                    let p = w * u;
                    p * (a - theta * p).exp()
                }).sum();
                sum / self.inv_slopes.len() as f64
            }
            DemandModel::PowerLaw { .. } => self.generic(lambda),
        }
    }
}

/// Symmetric grid `k * step`, `k = -half..=half`, with exact endpoints.
struct Grid {
    half: i64,
    width: f64,
}

impl Grid {
    fn new(width: f64, step: f64) -> Self {
        let half = if width > 0.0 { ((width / step).round() as i64).max(1) } else { 0 };
        Self { half, width }
    }

    fn value(&self, k: i64) -> f64 {
        if k == self.half {
            self.width
        } else if k == -self.half {
            -self.width
        } else {
            k as f64 * (self.width / self.half as f64)
        }
    }

    /// Index of the grid point nearest to `x`, clamped to the grid.
    fn nearest(&self, x: f64) -> i64 {
        if self.half == 0 {
            return 0;
        }
        ((x / (self.width / self.half as f64)).round() as i64).clamp(-self.half, self.half)
    }

    /// Best index under `f`; ties go to the smaller `|k|`, then to negative `k`.
    fn argmax(&self, mut f: impl FnMut(f64) -> f64) -> (i64, f64) {
        let mut best = (0, f(0.0));
        for m in 1..=self.half {
            for k in [-m, m] {
                let v = f(self.value(k));
                if v > best.1 || best.1.is_nan() {
                    best = (k, v);
                }
            }
        }
        best
    }
}

fn scalar_variance(model: &DemandModel, report: &EstimateReport) -> Result<f64> {
    report.sigma_hat_sq.scalar().ok_or_else(|| Error::UnsupportedVariant {
        model: model.name(),
        reason: "single-parameter bootstrap needs a scalar variance".into(),
    })
}

/// Bootstrap adjustment for a single-parameter model.
///
/// The search domain is `[-h, h]` with `h = mult * |lambda_init|` and
/// `lambda_init` the plug-in coefficient. Linear demand is solved in closed
/// form (the objective is quadratic in `u = 1 / (1 + lambda / n)`); other
/// families use a grid search with step `grid_step_mult * |lambda_init|`.
/// A degenerate domain returns zero without resampling.
pub fn bootstrap_adjust_single(
    data: &Dataset,
    model: &DemandModel,
    report: &EstimateReport,
    config: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    config.validate()?;
    if model.param_len() != 1 {
        return Err(Error::UnsupportedVariant { model: model.name(), reason: "use bootstrap_adjust_multi".into() });
    }
    let c = derivative_ratio_constant(model)?;
    let theta_hat = report.theta_hat.theta();
    let init = plugin_lambda_single(c, scalar_variance(model, report)?, theta_hat)?;
    let h = config.search_halfwidth_mult * init.abs();
    if !(h > 0.0 && h.is_finite()) {
        return Ok(BootstrapOutcome::degenerate(1));
    }
    let draws = bootstrap_estimates(data, model, report, config)?;
    let n = data.n();
    let objective = Objective::new(model, report.theta_hat, &draws.estimates, n, config.truncation_floor);
    let grid = Grid::new(h, config.grid_step_mult * init.abs());

    let lambda = match model {
        DemandModel::LinearKnownIntercept { .. } => {
            let [m1, m2] = objective.moments;
            let u = m1 / (theta_hat * m2);
            let nf = n as f64;
            // below `lo` some bootstrap estimates hit the floor
            let lo = (-h).max(nf * (config.truncation_floor / objective.min_slope - 1.0));
            let l = nf * (1.0 / u - 1.0);
            if l.is_nan() {
                0.0
            } else {
                l.clamp(lo, h)
            }
        }
        _ => grid.value(grid.argmax(|l| objective.eval(&[l])).0),
    };
    Ok(BootstrapOutcome {
        objective: objective.eval(&[lambda]),
        objective_at_zero: objective.eval(&[0.0]),
        lambda: vec![lambda],
        initial: vec![init],
        resamples: draws.estimates.len(),
        truncated: draws.truncated,
        rounds: 0,
    })
}

/// Bootstrap adjustment for the two-parameter model by coordinate descent.
///
/// Starts from the pinned plug-in solution `(lambda_1, 0)`. The first
/// coordinate searches `mult * |lambda_1|` around zero with step
/// `grid_step_mult * |lambda_1|`, the second the fixed grid
/// `[-secondary_halfwidth, secondary_halfwidth]`. Each round optimizes both
/// coordinates once; the search stops after a round without change or
/// after `max_coord_rounds` rounds.
pub fn bootstrap_adjust_multi(
    data: &Dataset,
    model: &DemandModel,
    report: &EstimateReport,
    config: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    config.validate()?;
    let sigma = match (model, report.sigma_hat_sq) {
        (DemandModel::LinearTwoParam, Variance::Matrix(s)) => s,
        _ => {
            return Err(Error::UnsupportedVariant {
                model: model.name(),
                reason: "multi-parameter bootstrap needs the two-parameter model".into(),
            })
        }
    };
    let init = two_param_pinned_lambda(&report.theta_hat, &sigma);
    let draws = bootstrap_estimates(data, model, report, config)?;
    let n = data.n();
    let objective = Objective::new(model, report.theta_hat, &draws.estimates, n, config.truncation_floor);
    let h1 = config.search_halfwidth_mult * init[0].abs();
    let grid1 = Grid::new(if h1.is_finite() { h1 } else { 0.0 }, config.grid_step_mult * init[0].abs());
    let grid2 = Grid::new(config.secondary_halfwidth, config.secondary_step);

    let mut k = [grid1.nearest(init[0]), 0];
    let mut rounds = 0;
    while rounds < config.max_coord_rounds {
        rounds += 1;
        let l2 = grid2.value(k[1]);
        let (k1, _) = grid1.argmax(|l| objective.eval(&[l, l2]));
        let l1 = grid1.value(k1);
        let (k2, _) = grid2.argmax(|l| objective.eval(&[l1, l]));
        let changed = [k1, k2] != k;
        k = [k1, k2];
        if !changed {
            break;
        }
    }
    let lambda = vec![grid1.value(k[0]), grid2.value(k[1])];
    Ok(BootstrapOutcome {
        objective: objective.eval(&lambda),
        objective_at_zero: objective.eval(&[0.0, 0.0]),
        lambda,
        initial: init.to_vec(),
        resamples: draws.estimates.len(),
        truncated: draws.truncated,
        rounds,
    })
}
