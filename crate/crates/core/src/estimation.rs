//! Least-squares estimators for the demand families.
//!
//! Variance convention: `sigma_hat_sq` is n-scaled, i.e. the estimate of
//! `n * Var(theta_hat)`. Every adjustment formula in the crate consumes it
//! in that form, so a report for `n = 50` with `sigma_hat_sq = 2` means a
//! sampling variance of about `0.04`.

use serde::{Deserialize, Serialize};

use crate::demand::{DemandModel, ParamVector};
use crate::error::{Error, Result};

/// Default truncation threshold for slope estimates.
pub const DEFAULT_TRUNCATION_FLOOR: f64 = 1e-3;

/// Paired price/demand observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    prices: Vec<f64>,
    demands: Vec<f64>,
}

impl Dataset {
    /// Validates and wraps observations. Requires at least two points, all
    /// prices positive and finite, and at least two distinct prices.
    pub fn new(prices: Vec<f64>, demands: Vec<f64>) -> Result<Self> {
        if prices.len() != demands.len() {
            return Err(Error::DimensionMismatch { expected: prices.len(), found: demands.len() });
        }
        if prices.len() < 2 {
            return Err(Error::InvalidParameter(format!("dataset needs at least 2 points, got {}", prices.len())));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidParameter(format!("prices must be positive and finite, got {p}")));
        }
        if let Some(d) = demands.iter().find(|d| d.is_nan()) {
            return Err(Error::InvalidParameter(format!("demand is not a number: {d}")));
        }
        if prices.iter().all(|&p| p == prices[0]) {
            return Err(Error::SingularDesign("all prices are identical".into()));
        }
        Ok(Self { prices, demands })
    }

    pub fn n(&self) -> usize {
        self.prices.len()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }
}

/// Estimated n-scaled sampling variance of the parameter estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variance {
    Scalar(f64),
    /// Covariance of `(theta_1, theta_2)`, row-major.
    Matrix([[f64; 2]; 2]),
}

impl Variance {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Variance::Scalar(v) => Some(*v),
            Variance::Matrix(_) => None,
        }
    }

    pub fn matrix(&self) -> Option<[[f64; 2]; 2]> {
        match self {
            Variance::Matrix(m) => Some(*m),
            Variance::Scalar(_) => None,
        }
    }
}

/// Output of a least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta_hat: ParamVector,
    /// n-scaled variance (or covariance) of `theta_hat`.
    pub sigma_hat_sq: Variance,
    /// Residuals in the response scale of the fit (log scale for log-linear).
    pub residuals: Vec<f64>,
    pub sigma_eps_hat_sq: f64,
    pub dof: usize,
    /// Set when [`truncate_estimate`] raised the slope to the floor.
    pub truncated: bool,
}

/// Residuals within this fraction of the response scale count as rounding.
pub const NOISE_FREE_RTOL: f64 = 1e-12;

/// Zeroes the residuals when every one is below rounding level, so data that
/// lie exactly on the model report zero noise rather than float dust.
fn snap_noise_free(residuals: &mut [f64], scale: f64) {
    if residuals.iter().all(|r| r.abs() <= NOISE_FREE_RTOL * scale) {
        residuals.iter_mut().for_each(|r| *r = 0.0);
    }
}

fn residual_variance(residuals: &[f64], dof: usize) -> f64 {
    if dof == 0 {
        0.0
    } else {
        residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64
    }
}

/// Known-intercept fit of `y_i = a - theta p_i + eps_i` on raw responses.
///
/// Accepts a single observation (zero residual degrees of freedom), which
/// [`Dataset`] does not.
pub fn fit_known_intercept(prices: &[f64], responses: &[f64], a: f64) -> Result<EstimateReport> {
    if prices.len() != responses.len() {
        return Err(Error::DimensionMismatch { expected: prices.len(), found: responses.len() });
    }
    if prices.is_empty() {
        return Err(Error::SingularDesign("no observations".into()));
    }
    let sum_p2: f64 = prices.iter().map(|p| p * p).sum();
    if sum_p2 == 0.0 {
        return Err(Error::SingularDesign("all prices are zero".into()));
    }
    let cross: f64 = prices.iter().zip(responses).map(|(p, y)| p * (y - a)).sum();
    let theta = -cross / sum_p2;
    let mut residuals: Vec<f64> = prices.iter().zip(responses).map(|(p, y)| y - a + theta * p).collect();
    let scale = prices.iter().zip(responses).fold(a.abs(), |m, (p, y)| m.max(y.abs()).max((theta * p).abs()));
    snap_noise_free(&mut residuals, scale);
    let n = prices.len();
    let dof = n - 1;
    let sigma_eps_hat_sq = residual_variance(&residuals, dof);
    Ok(EstimateReport {
        theta_hat: ParamVector::scalar(theta),
        sigma_hat_sq: Variance::Scalar(sigma_eps_hat_sq * n as f64 / sum_p2),
        residuals,
        sigma_eps_hat_sq,
        dof,
        truncated: false,
    })
}

/// OLS for `d = a - theta p` with `a` known.
pub fn ols_known_intercept(data: &Dataset, a: f64) -> Result<EstimateReport> {
    fit_known_intercept(data.prices(), data.demands(), a)
}

/// OLS for `log d = a - theta p` with `a` known; residuals are in log space.
pub fn ols_log_linear(data: &Dataset, a: f64) -> Result<EstimateReport> {
    if let Some(d) = data.demands().iter().find(|d| !(**d > 0.0)) {
        return Err(Error::Domain(format!("log-linear fit needs positive demand, got {d}")));
    }
    let logs: Vec<f64> = data.demands().iter().map(|d| d.ln()).collect();
    fit_known_intercept(data.prices(), &logs, a)
}

/// Centered design for the two-parameter regression `y = theta_1 - theta_2 p`.
#[derive(Debug, Clone)]
pub(crate) struct TwoParamDesign {
    n: usize,
    mean_p: f64,
    sum_p: f64,
    sum_p2: f64,
    sxx: f64,
    centered: Vec<f64>,
}

impl TwoParamDesign {
    pub(crate) fn new(prices: &[f64]) -> Result<Self> {
        let n = prices.len();
        if n < 2 {
            return Err(Error::SingularDesign(format!("two-parameter fit needs 2 points, got {n}")));
        }
        let sum_p: f64 = prices.iter().sum();
        let mean_p = sum_p / n as f64;
        let centered: Vec<f64> = prices.iter().map(|p| p - mean_p).collect();
        let sxx: f64 = centered.iter().map(|c| c * c).sum();
        let sum_p2: f64 = prices.iter().map(|p| p * p).sum();
        if !(sxx > 1e-14 * sum_p2) {
            return Err(Error::SingularDesign("prices have no spread".into()));
        }
        Ok(Self { n, mean_p, sum_p, sum_p2, sxx, centered })
    }

    /// `(theta_1, theta_2)` for the given responses.
    #[inline]
    pub(crate) fn coefficients(&self, responses: &[f64]) -> (f64, f64) {
        let mut sum_y = 0.0;
        let mut sxy = 0.0;
        for (c, y) in self.centered.iter().zip(responses) {
            sum_y += y;
            sxy += c * y;
        }
        let slope = -sxy / self.sxx;
        (sum_y / self.n as f64 + slope * self.mean_p, slope)
    }

    /// Per-observation weights `(w1, w2)` with
    /// `coefficients(e * v) = (sum w1_i v_i, sum w2_i v_i)`.
    pub(crate) fn influence(&self, residuals: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w2: Vec<f64> = self.centered.iter().zip(residuals).map(|(c, e)| -c * e / self.sxx).collect();
        let w1 = residuals.iter().zip(&w2).map(|(e, w)| e / self.n as f64 + w * self.mean_p).collect();
        (w1, w2)
    }

    fn report(&self, prices: &[f64], responses: &[f64]) -> EstimateReport {
        let (t1, t2) = self.coefficients(responses);
        let mut residuals: Vec<f64> = prices.iter().zip(responses).map(|(p, y)| y - t1 + t2 * p).collect();
        let scale = prices.iter().zip(responses).fold(t1.abs(), |m, (p, y)| m.max(y.abs()).max((t2 * p).abs()));
        snap_noise_free(&mut residuals, scale);
        let dof = self.n - 2;
        let s2 = residual_variance(&residuals, dof);
        // n * s2 * (X'X)^-1 for X = [1, -p], with det(X'X) = n * sxx
        let cov = [
            [s2 * self.sum_p2 / self.sxx, s2 * self.sum_p / self.sxx],
            [s2 * self.sum_p / self.sxx, s2 * self.n as f64 / self.sxx],
        ];
        EstimateReport {
            theta_hat: ParamVector::pair(t1, t2),
            sigma_hat_sq: Variance::Matrix(cov),
            residuals,
            sigma_eps_hat_sq: s2,
            dof,
            truncated: false,
        }
    }
}

/// OLS for `d = theta_1 - theta_2 p` with both parameters unknown.
pub fn ols_two_param(data: &Dataset) -> Result<EstimateReport> {
    let design = TwoParamDesign::new(data.prices())?;
    Ok(design.report(data.prices(), data.demands()))
}

/// Fits `data` with the estimator that matches `model`.
pub fn fit(model: &DemandModel, data: &Dataset) -> Result<EstimateReport> {
    match *model {
        DemandModel::LinearKnownIntercept { a } => ols_known_intercept(data, a),
        DemandModel::LogLinearKnownIntercept { a } => ols_log_linear(data, a),
        DemandModel::LinearTwoParam => ols_two_param(data),
        DemandModel::PowerLaw { .. } => Err(Error::UnsupportedVariant {
            model: model.name(),
            reason: "no least-squares estimator for power-law demand".into(),
        }),
    }
}

/// Raises the slope component to at least `floor`. Negative slopes are
/// floored to `+floor`, not reflected.
///
/// # Panics
/// If `floor` is not positive.
pub fn truncate_estimate(mut report: EstimateReport, floor: f64) -> EstimateReport {
    assert!(floor > 0.0, "truncation floor must be positive");
    let i = report.theta_hat.slope_index();
    let slope = report.theta_hat.get(i);
    // NaN slopes are floored as well
    if !(slope >= floor) {
        report.theta_hat.as_mut_slice()[i] = floor;
        report.truncated = true;
    }
    report
}
