//! Oracle and plug-in adjustment coefficients, their improvement gaps, and
//! the multi-parameter adjustment system.
//!
//! An adjustment maps an estimate to `theta_hat (1 + lambda / n)`, applied
//! componentwise for vector parameters. All variances here are n-scaled.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{self, BootstrapConfig};
use crate::demand::{derivative_ratio_constant, reward_derivative, DemandModel, ParamVector};
use crate::error::{Error, Result};
use crate::estimation::{Dataset, EstimateReport, Variance, DEFAULT_TRUNCATION_FLOOR};
use crate::tensor::Tensor3;

/// Relative singular-value threshold below which `A` counts as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

/// Largest tolerated `|T_ijk - T_pi(ijk)|` relative to `max |T|`.
pub const TENSOR_SYMMETRY_TOL: f64 = 1e-6;

fn nonzero_theta(theta: f64) -> Result<()> {
    if theta == 0.0 || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("theta must be finite and nonzero, got {theta}")));
    }
    Ok(())
}

fn nonnegative_variance(s2: f64) -> Result<()> {
    if !(s2 >= 0.0) || !s2.is_finite() {
        return Err(Error::InvalidParameter(format!("variance must be finite and nonnegative, got {s2}")));
    }
    Ok(())
}

/// `lambda* = -(C + 2) sigma^2 / (2 theta^2)`.
pub fn oracle_lambda_single(c: f64, sigma_theta_sq: f64, theta: f64) -> Result<f64> {
    nonzero_theta(theta)?;
    nonnegative_variance(sigma_theta_sq)?;
    Ok(-(c + 2.0) * sigma_theta_sq / (2.0 * theta * theta))
}

/// `lambda_n = (2 - C) sigma_hat^2 / (2 theta_hat^2)`.
pub fn plugin_lambda_single(c: f64, sigma_hat_sq: f64, theta_hat: f64) -> Result<f64> {
    nonzero_theta(theta_hat)?;
    nonnegative_variance(sigma_hat_sq)?;
    Ok((2.0 - c) * sigma_hat_sq / (2.0 * theta_hat * theta_hat))
}

/// `theta_hat_i (1 + lambda_i / n)`, with the slope re-floored at the
/// default truncation threshold.
///
/// # Panics
/// If `lambda` and `theta_hat` differ in length or `n == 0`.
pub fn apply_adjustment(theta_hat: &ParamVector, lambda: &[f64], n: usize) -> ParamVector {
    apply_adjustment_with_floor(theta_hat, lambda, n, DEFAULT_TRUNCATION_FLOOR)
}

/// [`apply_adjustment`] with an explicit slope floor.
pub fn apply_adjustment_with_floor(theta_hat: &ParamVector, lambda: &[f64], n: usize, floor: f64) -> ParamVector {
    assert_eq!(theta_hat.len(), lambda.len(), "lambda length must match the parameter vector");
    assert!(n >= 1, "sample size must be positive");
    let mut out = *theta_hat;
    let n = n as f64;
    for (x, l) in out.as_mut_slice().iter_mut().zip(lambda) {
        *x *= 1.0 + l / n;
    }
    let i = out.slope_index();
    if !(out.get(i) >= floor) {
        out.as_mut_slice()[i] = floor;
    }
    out
}

fn gap(r2: f64, coef: f64, sigma_theta_sq: f64, theta: f64) -> Result<f64> {
    nonzero_theta(theta)?;
    nonnegative_variance(sigma_theta_sq)?;
    if !(r2 < 0.0) {
        return Err(Error::AssumptionViolation(format!("second derivative at truth must be negative, got {r2}")));
    }
    Ok(-r2 * coef * coef * sigma_theta_sq * sigma_theta_sq / (8.0 * theta * theta))
}

/// n^2-scaled expected improvement of the oracle adjustment over PTO.
pub fn oracle_gap_single(c: f64, sigma_theta_sq: f64, theta: f64, r2: f64) -> Result<f64> {
    gap(r2, c + 2.0, sigma_theta_sq, theta)
}

/// n^2-scaled expected improvement of the plug-in adjustment over PTO.
pub fn plugin_gap_single(c: f64, sigma_theta_sq: f64, theta: f64, r2: f64) -> Result<f64> {
    gap(r2, 2.0 - c, sigma_theta_sq, theta)
}

/// Local structure of a multi-parameter surrogate reward at the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStructure {
    pub hessian: DMatrix<f64>,
    /// n-scaled covariance of the estimator.
    pub sigma: DMatrix<f64>,
    pub third_tensor: Tensor3,
    pub theta: DVector<f64>,
}

impl MultiStructure {
    /// Analytic Hessian and third-derivative tensor of `model` at `theta`.
    pub fn from_model(model: &DemandModel, theta: &ParamVector, sigma: DMatrix<f64>) -> Result<Self> {
        let hessian = reward_derivative(model, theta, theta, 2)?
            .into_matrix()
            .ok_or_else(|| Error::UnsupportedVariant { model: model.name(), reason: "scalar parameter".into() })?;
        let third_tensor = reward_derivative(model, theta, theta, 3)?.into_tensor().expect("matrix-valued model");
        Ok(Self { hessian, sigma, third_tensor, theta: DVector::from_column_slice(theta.as_slice()) })
    }

    fn check_dims(&self) -> Result<usize> {
        let m = self.theta.len();
        for (rows, cols) in [self.hessian.shape(), self.sigma.shape()] {
            if rows != m || cols != m {
                return Err(Error::DimensionMismatch { expected: m, found: if rows != m { rows } else { cols } });
            }
        }
        if self.third_tensor.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, found: self.third_tensor.dim() });
        }
        Ok(m)
    }
}

/// `A_ij = H_ij theta_i theta_j`.
pub fn multi_a_matrix(s: &MultiStructure) -> Result<DMatrix<f64>> {
    let m = s.check_dims()?;
    Ok(DMatrix::from_fn(m, m, |i, j| s.hessian[(i, j)] * (s.theta[i] * s.theta[j])))
}

/// `b_i = 2 sum_j H_ij Sigma_ij + theta_i sum_jk T_ijk Sigma_jk`.
pub fn multi_b_vector(s: &MultiStructure) -> Result<DVector<f64>> {
    let m = s.check_dims()?;
    let asym = s.third_tensor.max_asymmetry();
    if asym > TENSOR_SYMMETRY_TOL * s.third_tensor.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::AsymmetricTensor(asym));
    }
    Ok(DVector::from_fn(m, |i, _| {
        let mut quad = 0.0;
        let mut cubic = 0.0;
        for j in 0..m {
            quad += s.hessian[(i, j)] * s.sigma[(i, j)];
            for k in 0..m {
                cubic += s.third_tensor.get(i, j, k) * s.sigma[(j, k)];
            }
        }
        2.0 * quad + s.theta[i] * cubic
    }))
}

/// How to resolve a singular `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStrategy {
    /// Fix the last coordinate at zero.
    #[default]
    PinLast,
    /// Fix the given coordinate at zero.
    Pin(usize),
}

fn solve_negative_definite(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let max_eig = eig.eigenvalues.max();
    if max_eig >= 0.0 {
        return Err(Error::IndefiniteCurvature(max_eig));
    }
    let chol = (-a).cholesky().ok_or(Error::IndefiniteCurvature(max_eig))?;
    // A x = -b/2  <=>  (-A) x = b/2
    Ok(chol.solve(&(b * 0.5)))
}

/// Maximizer of `lambda' A lambda / 2 + b' lambda`, i.e. `-A^{-1} b / 2`.
///
/// A rank-deficient `A` is resolved by pinning one coordinate at zero and
/// solving the remaining block. Curvature directions with positive
/// eigenvalues make the objective unbounded and are reported as errors.
pub fn multi_oracle_lambda(a: &DMatrix<f64>, b: &DVector<f64>, strategy: SolveStrategy) -> Result<DVector<f64>> {
    let m = b.len();
    if a.shape() != (m, m) {
        return Err(Error::DimensionMismatch { expected: m, found: a.nrows() });
    }
    let scale = a.amax();
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidParameter("A must be symmetric".into()));
    }
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smax == 0.0 || !smax.is_finite() {
        return Err(Error::SingularSystem("A is zero or not finite".into()));
    }
    if smin > SINGULAR_TOL * smax {
        return solve_negative_definite(a, b);
    }
    let pin = match strategy {
        SolveStrategy::PinLast => m - 1,
        SolveStrategy::Pin(k) if k < m => k,
        SolveStrategy::Pin(k) => return Err(Error::DimensionMismatch { expected: m, found: k + 1 }),
    };
    // the pinned direction must carry no positive curvature either
    let max_eig = SymmetricEigen::new(a.clone()).eigenvalues.max();
    if max_eig > SINGULAR_TOL * smax {
        return Err(Error::IndefiniteCurvature(max_eig));
    }
    let keep: Vec<usize> = (0..m).filter(|&i| i != pin).collect();
    let block = a.select_rows(&keep).select_columns(&keep);
    let rhs = b.select_rows(&keep);
    let mut lambda = DVector::zeros(m);
    if keep.is_empty() {
        return Ok(lambda);
    }
    let bsv = block.singular_values();
    if bsv.min() <= SINGULAR_TOL * smax {
        return Err(Error::SingularSystem(format!("block without coordinate {pin} is singular")));
    }
    let sub = solve_negative_definite(&block, &rhs)?;
    for (slot, v) in keep.iter().zip(sub.iter()) {
        lambda[*slot] = *v;
    }
    Ok(lambda)
}

/// Closed-form pinned solution for the two-parameter linear model:
/// `lambda_1 = -S11/t1^2 + 3 S12/(t1 t2) - 2 S22/t2^2`, `lambda_2 = 0`.
pub fn two_param_pinned_lambda(theta: &ParamVector, sigma: &[[f64; 2]; 2]) -> [f64; 2] {
    let (t1, t2) = (theta.get(0), theta.get(1));
    [-sigma[0][0] / (t1 * t1) + 3.0 * sigma[0][1] / (t1 * t2) - 2.0 * sigma[1][1] / (t2 * t2), 0.0]
}

/// For the two-parameter model the reward depends on `x1 / x2` only, so
/// `(lambda_1, lambda_2)` and `(pinned_equivalent, 0)` produce the same
/// decision.
pub fn pinned_equivalent(lambda: &[f64; 2], n: usize) -> f64 {
    let n = n as f64;
    n * ((1.0 + lambda[0] / n) / (1.0 + lambda[1] / n) - 1.0)
}

/// A rule mapping an estimate to an adjusted estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum AdjustmentPolicy {
    /// Plain predict-then-optimize, `lambda = 0`.
    Pto,
    /// Oracle coefficient from the true parameter and variance.
    OracleSingle { theta: f64, sigma_sq: f64 },
    /// Plug-in coefficient from the estimate and its variance estimate.
    PluginSingle,
    /// Oracle multi-parameter coefficient from the true parameters and
    /// n-scaled covariance.
    OracleMulti { strategy: SolveStrategy, theta: ParamVector, sigma: [[f64; 2]; 2] },
    Bootstrap(BootstrapConfig),
}

impl AdjustmentPolicy {
    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            AdjustmentPolicy::Pto => "pto",
            AdjustmentPolicy::OracleSingle { .. } | AdjustmentPolicy::OracleMulti { .. } => "oracle",
            AdjustmentPolicy::PluginSingle => "dd",
            AdjustmentPolicy::Bootstrap(_) => "boot",
        }
    }

    /// The adjustment vector this policy picks for `report`, which must be
    /// the (truncated) fit of `data` under `model`.
    pub fn lambda(&self, model: &DemandModel, data: &Dataset, report: &EstimateReport) -> Result<Vec<f64>> {
        let m = model.param_len();
        match self {
            AdjustmentPolicy::Pto => Ok(vec![0.0; m]),
            AdjustmentPolicy::OracleSingle { theta, sigma_sq } => {
                let c = derivative_ratio_constant(model)?;
                Ok(vec![oracle_lambda_single(c, *sigma_sq, *theta)?])
            }
            AdjustmentPolicy::PluginSingle => {
                let c = derivative_ratio_constant(model)?;
                let s2 = report.sigma_hat_sq.scalar().ok_or_else(|| Error::UnsupportedVariant {
                    model: model.name(),
                    reason: "plug-in adjustment needs a scalar variance".into(),
                })?;
                Ok(vec![plugin_lambda_single(c, s2, report.theta_hat.theta())?])
            }
            AdjustmentPolicy::OracleMulti { strategy, theta, sigma } => {
                let s = MultiStructure::from_model(model, theta, DMatrix::from_fn(2, 2, |i, j| sigma[i][j]))?;
                let lambda = multi_oracle_lambda(&multi_a_matrix(&s)?, &multi_b_vector(&s)?, *strategy)?;
                Ok(lambda.iter().copied().collect())
            }
            AdjustmentPolicy::Bootstrap(config) => {
                let outcome = match report.sigma_hat_sq {
                    Variance::Scalar(_) => bootstrap::bootstrap_adjust_single(data, model, report, config)?,
                    Variance::Matrix(_) => bootstrap::bootstrap_adjust_multi(data, model, report, config)?,
                };
                Ok(outcome.lambda)
            }
        }
    }
}
