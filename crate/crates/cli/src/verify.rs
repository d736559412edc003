//! Self-checks run by `pto-adjust verify`.

use std::fmt;

use pto_adjust::adjustment::{
    multi_a_matrix, multi_b_vector, multi_oracle_lambda, oracle_gap_single, plugin_gap_single, two_param_pinned_lambda,
    MultiStructure, SolveStrategy,
};
use pto_adjust::demand::{derivative_ratio_constant, reward_derivative, surrogate_reward};
use pto_adjust::numdiff;
use pto_adjust::rng::{purpose, substream};
use pto_adjust::simulation::{RewardKind, SyntheticStudy};
use pto_adjust::{DMatrix, DVector, DemandModel, ParamVector, Tensor3};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scope {
    Constants,
    Gaps,
    Multi,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Exact,
    Relative(f64),
    /// `|measured - expected| <= tol * max(1, |expected|)`.
    Scaled(f64),
    Range(f64, f64),
}

impl Tolerance {
    fn accepts(&self, measured: f64, expected: f64) -> bool {
        match *self {
            Tolerance::Exact => measured == expected,
            Tolerance::Relative(t) => (measured - expected).abs() <= t * expected.abs(),
            Tolerance::Scaled(t) => (measured - expected).abs() <= t * expected.abs().max(1.0),
            Tolerance::Range(lo, hi) => (lo..=hi).contains(&measured),
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Exact => write!(f, "exact"),
            Tolerance::Relative(t) => write!(f, "rel {t:e}"),
            Tolerance::Scaled(t) => write!(f, "abs {t:e} (scaled)"),
            Tolerance::Range(lo, hi) => write!(f, "within [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: Tolerance,
    pub passed: bool,
}

impl Check {
    pub fn new(suite: &'static str, name: impl Into<String>, measured: f64, expected: f64, tolerance: Tolerance) -> Self {
        let passed = tolerance.accepts(measured, expected);
        Self { suite, name: name.into(), measured, expected, tolerance, passed }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<9} {:<40} measured {:<22} expected {:<22} tol {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            format!("{:.10}", self.measured),
            format!("{:.10}", self.expected),
            self.tolerance
        )
    }
}

fn single_reward(m: DemandModel, theta: f64) -> impl Fn(f64) -> f64 {
    move |x| surrogate_reward(&m, &ParamVector::scalar(theta), &ParamVector::scalar(x)).unwrap_or(f64::NAN)
}

/// `C` for each family, then `theta R''' / R''` by finite differences on a
/// 12-point grid.
pub fn constants() -> Vec<Check> {
    let mut out = Vec::new();
    let fixed = [
        (DemandModel::linear(60.0).unwrap(), -6.0),
        (DemandModel::log_linear(8.0).unwrap(), -4.0),
    ];
    for (m, c) in fixed {
        out.push(Check::new("constants", format!("C {}", m.name()), derivative_ratio_constant(&m).unwrap(), c, Tolerance::Exact));
    }
    for gamma in [0.5, 1.0, 2.0, 5.0] {
        let m = DemandModel::power_law(1.0, gamma).unwrap();
        let expected = -2.0 * (1.0 + 2.0 * gamma) / gamma;
        out.push(Check::new(
            "constants",
            format!("C power-law gamma={gamma}"),
            derivative_ratio_constant(&m).unwrap(),
            expected,
            Tolerance::Relative(1e-15),
        ));
    }
    let grid = [DemandModel::linear(60.0).unwrap(), DemandModel::log_linear(8.0).unwrap(), DemandModel::power_law(1.0, 2.0).unwrap()];
    for m in grid {
        let c = derivative_ratio_constant(&m).unwrap();
        for theta in [0.5, 1.0, 3.0, 5.0] {
            let f = single_reward(m, theta);
            let ratio = theta * numdiff::derivative(&f, theta, 3) / numdiff::derivative(&f, theta, 2);
            out.push(Check::new(
                "constants",
                format!("fd theta*R'''/R'' {} theta={theta}", m.name()),
                ratio,
                c,
                Tolerance::Relative(1e-4),
            ));
        }
    }
    out
}

/// Monte Carlo gaps for linear demand with `a = theta = sigma = 1` at `n = 200`.
pub fn gaps() -> Vec<Check> {
    let (a, theta, s2) = (1.0, 1.0, 1.0);
    let study = SyntheticStudy {
        model: DemandModel::linear(a).unwrap(),
        theta,
        sigma_sq: s2,
        draws: 1_000_000,
        floor: 1e-3,
        seed: 20_240_601,
        reward: RewardKind::Surrogate,
        antithetic: true,
    };
    let g = study.run(200).expect("valid study");
    let r2 = -a * a / (2.0 * theta * theta * theta);
    let oracle = oracle_gap_single(-6.0, s2, theta, r2).unwrap();
    let plugin = plugin_gap_single(-6.0, s2, theta, r2).unwrap();
    vec![
        Check::new("gaps", "n^2 gap oracle", g.oracle.mean, oracle, Tolerance::Relative(0.1)),
        Check::new("gaps", "n^2 gap plug-in", g.plugin.mean, plugin, Tolerance::Relative(0.1)),
        Check::new("gaps", "plug-in / oracle", g.plugin.mean / g.oracle.mean, 4.0, Tolerance::Range(3.4, 4.6)),
    ]
}

/// Pinned adjustment for the two-parameter model via the general `(A, b)`
/// system, with a finite-difference third-derivative tensor.
pub fn multi_lambda_fd(theta: &ParamVector, sigma: &[[f64; 2]; 2]) -> f64 {
    let m = DemandModel::LinearTwoParam;
    let f = |x: &[f64]| surrogate_reward(&m, theta, &ParamVector::pair(x[0], x[1])).unwrap();
    let hessian = reward_derivative(&m, theta, theta, 2).unwrap().into_matrix().unwrap();
    let third = Tensor3::from_row_major(2, numdiff::third_tensor(&f, theta.as_slice()));
    let s = MultiStructure {
        hessian,
        sigma: DMatrix::from_fn(2, 2, |i, j| sigma[i][j]),
        third_tensor: third,
        theta: DVector::from_column_slice(theta.as_slice()),
    };
    let a = multi_a_matrix(&s).unwrap();
    let b = multi_b_vector(&s).unwrap();
    multi_oracle_lambda(&a, &b, SolveStrategy::PinLast).unwrap()[0]
}

/// 20 random `(theta_1, theta_2, Sigma)` triples.
pub fn random_triples(seed: u64) -> Vec<(ParamVector, [[f64; 2]; 2])> {
    let mut rng = substream(seed, &[purpose::CHECK]);
    (0..20)
        .map(|_| {
            let theta = ParamVector::pair(rng.random_range(10.0..100.0), rng.random_range(1.0..10.0));
            let (l11, l21, l22) = (rng.random_range(0.5..8.0), rng.random_range(-3.0..3.0), rng.random_range(0.3..3.0));
            let sigma = [[l11 * l11, l11 * l21], [l11 * l21, l21 * l21 + l22 * l22]];
            (theta, sigma)
        })
        .collect()
}

pub fn multi() -> Vec<Check> {
    random_triples(17)
        .into_iter()
        .map(|(theta, sigma)| {
            let measured = multi_lambda_fd(&theta, &sigma);
            let expected = two_param_pinned_lambda(&theta, &sigma)[0];
            Check::new(
                "multi",
                format!("lambda_1 theta=({:.2}, {:.2})", theta.get(0), theta.get(1)),
                measured,
                expected,
                Tolerance::Scaled(1e-6),
            )
        })
        .collect()
}

pub fn run_scope(scope: Scope) -> Vec<Check> {
    match scope {
        Scope::Constants => constants(),
        Scope::Gaps => gaps(),
        Scope::Multi => multi(),
        Scope::All => [constants(), gaps(), multi()].concat(),
    }
}
