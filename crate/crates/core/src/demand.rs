//! Demand families, their revenue-maximizing prices, and the surrogate reward
//! `R_theta(theta_hat)`: the true revenue earned at the price chosen as if
//! `theta_hat` were the truth.
//!
//! Every known-intercept family prices as `p = k / theta_hat` for a
//! model-specific scale `k`, so the surrogate reward is `G(k / x)` with
//! `G(p) = p d(p)` under the true parameter. Analytic derivatives up to
//! order three follow from the chain rule through `u = 1 / x`; orders four
//! and five fall back to central differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numdiff;
use crate::tensor::Tensor3;

/// Parameters at or below this value are rejected: the pricing map divides
/// by the slope.
pub const PARAM_FLOOR: f64 = 1e-12;

/// A demand family with its known constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DemandModel {
    /// `d(p) = a - theta p`, with `a` known.
    LinearKnownIntercept { a: f64 },
    /// `d(p) = theta_1 - theta_2 p`, both unknown.
    LinearTwoParam,
    /// `d(p) = exp(a - theta p)`, with `a` known.
    LogLinearKnownIntercept { a: f64 },
    /// `d(p) = max(a - theta p, 0)^gamma`, with `a` and `gamma` known.
    PowerLaw { a: f64, gamma: f64 },
}

impl DemandModel {
    pub fn linear(a: f64) -> Result<Self> {
        let m = DemandModel::LinearKnownIntercept { a };
        m.validate()?;
        Ok(m)
    }

    pub fn log_linear(a: f64) -> Result<Self> {
        let m = DemandModel::LogLinearKnownIntercept { a };
        m.validate()?;
        Ok(m)
    }

    pub fn power_law(a: f64, gamma: f64) -> Result<Self> {
        let m = DemandModel::PowerLaw { a, gamma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DemandModel::LinearKnownIntercept { a } | DemandModel::LogLinearKnownIntercept { a } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidParameter(format!("intercept a must be positive, got {a}")));
                }
            }
            DemandModel::PowerLaw { a, gamma } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidParameter(format!("intercept a must be positive, got {a}")));
                }
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidParameter(format!("exponent gamma must be positive, got {gamma}")));
                }
            }
            DemandModel::LinearTwoParam => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            DemandModel::LinearKnownIntercept { .. } => "linear",
            DemandModel::LinearTwoParam => "linear-two-param",
            DemandModel::LogLinearKnownIntercept { .. } => "log-linear",
            DemandModel::PowerLaw { .. } => "power-law",
        }
    }

    /// Number of unknown parameters.
    pub fn param_len(&self) -> usize {
        match self {
            DemandModel::LinearTwoParam => 2,
            _ => 1,
        }
    }

    /// Scale `k` in the pricing rule `p = k / theta`, single-parameter families only.
    fn price_scale(&self) -> Option<f64> {
        match *self {
            DemandModel::LinearKnownIntercept { a } => Some(a / 2.0),
            DemandModel::LogLinearKnownIntercept { .. } => Some(1.0),
            DemandModel::PowerLaw { a, gamma } => Some(a / (1.0 + gamma)),
            DemandModel::LinearTwoParam => None,
        }
    }

    /// Demand and its first three price derivatives, unclamped.
    fn demand_derivatives(&self, theta: f64, p: f64) -> Result<[f64; 4]> {
        Ok(match *self {
            DemandModel::LinearKnownIntercept { a } => [a - theta * p, -theta, 0.0, 0.0],
            DemandModel::LogLinearKnownIntercept { a } => {
                let d = (a - theta * p).exp();
                [d, -theta * d, theta * theta * d, -theta.powi(3) * d]
            }
            DemandModel::PowerLaw { a, gamma } => {
                let raw = a - theta * p;
                // a base that is negative only by rounding is the boundary itself
                let base = if raw < 0.0 && raw >= -4.0 * f64::EPSILON * a { 0.0 } else { raw };
                let pow = |e: f64| -> Result<f64> {
                    if base >= 0.0 {
                        Ok(base.powf(e))
                    } else if e.fract() == 0.0 {
                        Ok(base.powi(e as i32))
                    } else {
                        Err(Error::Domain(format!(
                            "power-law demand with gamma={gamma} has negative base {base} at price {p}"
                        )))
                    }
                };
                let g = gamma;
                [
                    pow(g)?,
                    -g * theta * pow(g - 1.0)?,
                    g * (g - 1.0) * theta * theta * pow(g - 2.0)?,
                    -g * (g - 1.0) * (g - 2.0) * theta.powi(3) * pow(g - 3.0)?,
                ]
            }
            DemandModel::LinearTwoParam => unreachable!("two-parameter model has no scalar slope"),
        })
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::DimensionMismatch { expected: self.param_len(), found: params.len() });
        }
        if params.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter {params:?}")));
        }
        let slope = params.slope();
        if slope <= PARAM_FLOOR {
            return Err(Error::InvalidParameter(format!("price sensitivity must exceed {PARAM_FLOOR:e}, got {slope}")));
        }
        Ok(())
    }
}

/// Unknown demand parameters: `[theta]` for the known-intercept families,
/// `[theta_1, theta_2]` (intercept, slope) for the two-parameter linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct ParamVector {
    values: [f64; 2],
    len: usize,
}

impl ParamVector {
    pub const MAX_LEN: usize = 2;

    pub fn scalar(theta: f64) -> Self {
        Self { values: [theta, 0.0], len: 1 }
    }

    pub fn pair(intercept: f64, slope: f64) -> Self {
        Self { values: [intercept, slope], len: 2 }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        match *values {
            [t] => Ok(Self::scalar(t)),
            [a, b] => Ok(Self::pair(a, b)),
            _ => Err(Error::DimensionMismatch { expected: 2, found: values.len() }),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values[..self.len]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.as_slice()[i]
    }

    /// Index of the price-sensitivity component (always the last one).
    pub fn slope_index(&self) -> usize {
        self.len - 1
    }

    pub fn slope(&self) -> f64 {
        self.values[self.len - 1]
    }

    /// The scalar value of a single-parameter vector.
    pub fn theta(&self) -> f64 {
        debug_assert_eq!(self.len, 1);
        self.values[0]
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.as_slice().to_vec()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamVector::from_slice(&v)
    }
}

/// A derivative of the surrogate reward: a scalar for single-parameter
/// models, or a gradient, Hessian, or third-order tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Derivative {
    Scalar(f64),
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    Tensor(Tensor3),
}

impl Derivative {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Derivative::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn into_matrix(self) -> Option<DMatrix<f64>> {
        match self {
            Derivative::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn into_vector(self) -> Option<DVector<f64>> {
        match self {
            Derivative::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_tensor(self) -> Option<Tensor3> {
        match self {
            Derivative::Tensor(t) => Some(t),
            _ => None,
        }
    }
}

/// Expected demand at `price`. Power-law demand clamps its base at zero.
pub fn demand(model: &DemandModel, params: &ParamVector, price: f64) -> Result<f64> {
    model.validate()?;
    model.check_params(params)?;
    check_price(price)?;
    Ok(match *model {
        DemandModel::LinearKnownIntercept { a } => a - params.theta() * price,
        DemandModel::LogLinearKnownIntercept { a } => (a - params.theta() * price).exp(),
        DemandModel::PowerLaw { a, gamma } => (a - params.theta() * price).max(0.0).powf(gamma),
        DemandModel::LinearTwoParam => params.get(0) - params.get(1) * price,
    })
}

fn check_price(price: f64) -> Result<()> {
    if price.is_nan() || price < 0.0 {
        return Err(Error::InvalidParameter(format!("price must be nonnegative, got {price}")));
    }
    Ok(())
}

/// Revenue-maximizing price when `params` are the true parameters.
pub fn optimal_decision(model: &DemandModel, params: &ParamVector) -> Result<f64> {
    model.validate()?;
    model.check_params(params)?;
    Ok(match model.price_scale() {
        Some(k) => k / params.theta(),
        None => params.get(0) / (2.0 * params.get(1)),
    })
}

/// Revenue actually earned at `price`: `price * max(demand, 0)`.
pub fn realized_reward(model: &DemandModel, true_params: &ParamVector, price: f64) -> Result<f64> {
    let d = demand(model, true_params, price)?;
    Ok(price * d.max(0.0))
}

/// `realized_reward(price) - realized_reward(reference)`, evaluated without
/// subtracting two nearly equal revenues. Near the optimum the difference is
/// second order in `price - reference` and the naive form loses it to
/// rounding.
pub fn reward_difference(model: &DemandModel, true_params: &ParamVector, price: f64, reference: f64) -> Result<f64> {
    let d = demand(model, true_params, price)?;
    let d0 = demand(model, true_params, reference)?;
    if !(d > 0.0 && d0 > 0.0) {
        return Ok(price * d.max(0.0) - reference * d0.max(0.0));
    }
    let delta = price - reference;
    let theta = true_params.slope();
    Ok(match *model {
        // p d(p) - q d(q) = (p - q) (a - theta (p + q))
        DemandModel::LinearKnownIntercept { a } => delta * (a - theta * (price + reference)),
        DemandModel::LinearTwoParam => delta * (true_params.get(0) - theta * (price + reference)),
        DemandModel::LogLinearKnownIntercept { .. } => {
            let shrink = (-theta * delta).exp_m1();
            d0 * (delta * (1.0 + shrink) + reference * shrink)
        }
        DemandModel::PowerLaw { a, gamma } => {
            let growth = (gamma * (-theta * delta / (a - theta * reference)).ln_1p()).exp_m1();
            d0 * (delta * (1.0 + growth) + reference * growth)
        }
    })
}

/// `R_theta(theta_hat)`: true revenue at the price chosen under `est_params`.
///
/// No positivity clamp is applied, so the value is smooth in `est_params`.
/// It coincides with [`realized_reward`] at the plug-in price whenever the
/// demand there is nonnegative.
pub fn surrogate_reward(model: &DemandModel, true_params: &ParamVector, est_params: &ParamVector) -> Result<f64> {
    model.check_params(true_params)?;
    model.check_params(est_params)?;
    match model.price_scale() {
        Some(k) => {
            let p = k / est_params.theta();
            let [d, ..] = model.demand_derivatives(true_params.theta(), p)?;
            Ok(p * d)
        }
        None => {
            let r = est_params.get(0) / est_params.get(1);
            Ok(true_params.get(0) * r / 2.0 - true_params.get(1) * r * r / 4.0)
        }
    }
}

/// `R, R', R'', R'''` of a single-parameter surrogate reward at `x`.
fn single_param_derivatives(model: &DemandModel, theta: f64, x: f64) -> Result<[f64; 4]> {
    let k = model.price_scale().expect("single-parameter model");
    let u = 1.0 / x;
    let p = k * u;
    let [d0, d1, d2, d3] = model.demand_derivatives(theta, p)?;
    // G(p) = p d(p) and F(u) = G(k u)
    let f1 = k * (d0 + p * d1);
    let f2 = k * k * (2.0 * d1 + p * d2);
    let f3 = k.powi(3) * (3.0 * d2 + p * d3);
    let (u2, u3) = (u * u, u * u * u);
    Ok([
        p * d0,
        -u2 * f1,
        2.0 * u3 * f1 + u2 * u2 * f2,
        -6.0 * u2 * u2 * f1 - 6.0 * u3 * u2 * f2 - u3 * u3 * f3,
    ])
}

/// Partial derivatives of the two-parameter surrogate, via `r = x1 / x2`.
struct RatioChain {
    g1: f64,
    g2: f64,
    r1: [f64; 2],
    r2: [[f64; 2]; 2],
    r3: [[[f64; 2]; 2]; 2],
}

impl RatioChain {
    fn new(theta: &ParamVector, x: &ParamVector) -> Self {
        let (x1, x2) = (x.get(0), x.get(1));
        let r = x1 / x2;
        let (inv, inv2, inv3) = (1.0 / x2, 1.0 / (x2 * x2), 1.0 / (x2 * x2 * x2));
        let r11 = 2.0 * x1 * inv3;
        let r011 = 2.0 * inv3;
        let r111 = -6.0 * x1 * inv3 * inv;
        Self {
            g1: theta.get(0) / 2.0 - theta.get(1) * r / 2.0,
            g2: -theta.get(1) / 2.0,
            r1: [inv, -x1 * inv2],
            r2: [[0.0, -inv2], [-inv2, r11]],
            r3: [[[0.0, 0.0], [0.0, r011]], [[0.0, r011], [r011, r111]]],
        }
    }

    fn gradient(&self) -> DVector<f64> {
        DVector::from_fn(2, |i, _| self.g1 * self.r1[i])
    }

    fn hessian(&self) -> DMatrix<f64> {
        DMatrix::from_fn(2, 2, |i, j| self.g2 * self.r1[i] * self.r1[j] + self.g1 * self.r2[i][j])
    }

    fn third(&self) -> Tensor3 {
        let (r1, r2) = (&self.r1, &self.r2);
        Tensor3::from_fn(2, |i, j, k| {
            self.g2 * (r2[i][j] * r1[k] + r2[i][k] * r1[j] + r2[j][k] * r1[i]) + self.g1 * self.r3[i][j][k]
        })
    }
}

/// Derivative of `R_theta(.)` of the given order, evaluated at `at`.
///
/// Orders one to three are analytic. Orders four and five of the
/// single-parameter families use central differences of the analytic reward.
/// The two-parameter model supports orders one to three.
pub fn reward_derivative(
    model: &DemandModel,
    true_params: &ParamVector,
    at: &ParamVector,
    order: usize,
) -> Result<Derivative> {
    model.validate()?;
    model.check_params(true_params)?;
    model.check_params(at)?;
    if !(1..=5).contains(&order) {
        return Err(Error::InvalidParameter(format!("derivative order must be in 1..=5, got {order}")));
    }
    match model {
        DemandModel::LinearTwoParam => {
            let chain = RatioChain::new(true_params, at);
            match order {
                1 => Ok(Derivative::Vector(chain.gradient())),
                2 => Ok(Derivative::Matrix(chain.hessian())),
                3 => Ok(Derivative::Tensor(chain.third())),
                _ => Err(Error::UnsupportedVariant {
                    model: model.name(),
                    reason: format!("derivative of order {order}"),
                }),
            }
        }
        _ => {
            let theta = true_params.theta();
            if order <= 3 {
                return Ok(Derivative::Scalar(single_param_derivatives(model, theta, at.theta())?[order]));
            }
            let reward = |x: f64| {
                single_param_derivatives(model, theta, x).map(|r| r[0]).unwrap_or(f64::NAN)
            };
            let v = numdiff::derivative(reward, at.theta(), order);
            if v.is_nan() {
                return Err(Error::Domain(format!("reward undefined near {}", at.theta())));
            }
            Ok(Derivative::Scalar(v))
        }
    }
}

/// The constant `C` with `R'''(theta) / R''(theta) = C / theta`.
pub fn derivative_ratio_constant(model: &DemandModel) -> Result<f64> {
    model.validate()?;
    match *model {
        DemandModel::LinearKnownIntercept { .. } => Ok(-6.0),
        DemandModel::LogLinearKnownIntercept { .. } => Ok(-4.0),
        DemandModel::PowerLaw { gamma, .. } => Ok(-2.0 * (1.0 + 2.0 * gamma) / gamma),
        DemandModel::LinearTwoParam => Err(Error::UnsupportedVariant {
            model: model.name(),
            reason: "no scalar derivative-ratio constant; use the multi-parameter adjustment".into(),
        }),
    }
}
