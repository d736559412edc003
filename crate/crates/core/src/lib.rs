//! Post-estimation adjustments for predict-then-optimize pricing.
//!
//! A pricing decision made by plugging an unbiased estimate into the
//! revenue-optimal price is systematically worse than it needs to be,
//! because revenue is asymmetric in the estimation error. This crate
//! implements the multiplicative corrections `theta_hat (1 + lambda / n)`
//! that fix this, and the machinery to measure them:
//!
//! - [`demand`]: demand families, optimal prices, the surrogate reward and
//!   its derivatives, and the derivative-ratio constant `C`.
//! - [`estimation`]: least-squares fits with n-scaled variance estimates.
//! - [`adjustment`]: oracle and plug-in coefficients, their predicted
//!   improvement gaps, and the multi-parameter system `(A, b)`.
//! - [`bootstrap`]: wild-bootstrap estimation of the adjustment.
//! - [`simulation`]: Monte Carlo comparison of policies against plain PTO.
//!
//! Variances follow one convention throughout: `sigma_sq` is the n-scaled
//! asymptotic variance, so `Var(theta_hat) ~ sigma_sq / n`.

pub mod adjustment;
pub mod bootstrap;
pub mod demand;
pub mod error;
pub mod estimation;
pub mod numdiff;
pub mod rng;
pub mod simulation;
pub mod tensor;

pub use adjustment::{AdjustmentPolicy, MultiStructure, SolveStrategy};
pub use bootstrap::{BootstrapConfig, BootstrapOutcome, ResampleCount};
pub use demand::{DemandModel, Derivative, ParamVector};
pub use error::{Error, Result};
pub use estimation::{Dataset, EstimateReport, Variance};
pub use simulation::{ExperimentConfig, MetricsRecord, PolicyKind};
pub use tensor::Tensor3;

pub use nalgebra::{DMatrix, DVector};
