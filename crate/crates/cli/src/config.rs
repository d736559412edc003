//! Experiment configuration files.
//!
//! The format is TOML restricted to flat key-value pairs in two sections:
//!
//! ```toml
//! preset = "fig2/theta3sigma10"   # optional starting point
//!
//! [experiment]
//! model = "linear"                # linear | log-linear | linear-two-param
//! a = 60
//! theta = 3                       # [intercept, slope] for linear-two-param
//! noise_var = 10
//! price_range = [0.1, 6.0]
//! n_grid = [10, 20, 30]
//! replications = 10000
//! seed = 1
//! policies = ["oracle", "dd", "boot"]
//! antithetic = true
//! truncation_floor = 1e-3
//!
//! [bootstrap]
//! resamples_per_n = 10            # or `resamples = 500`
//! search_halfwidth_mult = 5
//! grid_step_mult = 0.1
//! secondary_halfwidth = 0.5
//! secondary_step = 0.01
//! max_coord_rounds = 50
//! antithetic = true
//! ```
//!
//! Keys left out keep the preset value, or the built-in default when there
//! is no preset. Without a preset, `model`, `theta`, `noise_var` and
//! `price_range` are required (plus `a` for the known-intercept families).

use std::fmt;
use std::ops::Range;

use pto_adjust::simulation::{presets, ExperimentConfig, PolicyKind};
use pto_adjust::{DemandModel, ParamVector, ResampleCount};
use serde::Deserialize;
use toml::Spanned;

/// A configuration problem, located by line and field when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.field) {
            (Some(l), Some(k)) => write!(f, "line {l}, field `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "field `{k}`: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    preset: Option<Spanned<String>>,
    experiment: Option<RawExperiment>,
    bootstrap: Option<RawBootstrap>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTheta {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    model: Option<Spanned<String>>,
    a: Option<Spanned<f64>>,
    theta: Option<Spanned<RawTheta>>,
    noise_var: Option<Spanned<f64>>,
    price_range: Option<Spanned<Vec<f64>>>,
    n_grid: Option<Spanned<Vec<i64>>>,
    replications: Option<Spanned<i64>>,
    seed: Option<Spanned<i64>>,
    policies: Option<Spanned<Vec<String>>>,
    antithetic: Option<Spanned<bool>>,
    truncation_floor: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBootstrap {
    resamples: Option<Spanned<i64>>,
    resamples_per_n: Option<Spanned<i64>>,
    search_halfwidth_mult: Option<Spanned<f64>>,
    grid_step_mult: Option<Spanned<f64>>,
    secondary_halfwidth: Option<Spanned<f64>>,
    secondary_step: Option<Spanned<f64>>,
    max_coord_rounds: Option<Spanned<i64>>,
    antithetic: Option<Spanned<bool>>,
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, field: &str, span: Range<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError { line: Some(self.line(span)), field: Some(field.into()), message: message.into() })
    }

    fn count(&self, field: &str, v: &Spanned<i64>, min: i64) -> Result<usize, ConfigError> {
        let x = *v.get_ref();
        if x < min {
            return self.err(field, v.span(), format!("must be at least {min}, got {x}"));
        }
        Ok(x as usize)
    }

    fn positive(&self, field: &str, v: &Spanned<f64>) -> Result<f64, ConfigError> {
        let x = *v.get_ref();
        if !(x > 0.0 && x.is_finite()) {
            return self.err(field, v.span(), format!("must be positive and finite, got {x}"));
        }
        Ok(x)
    }
}

fn missing(field: &str) -> ConfigError {
    ConfigError { line: None, field: Some(field.into()), message: "required when no preset is given".into() }
}

/// Looks up a preset by `figure/panel`, e.g. `fig2/theta3sigma10`.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let (fig, panel) = name.split_once('/')?;
    presets::figure(fig)?.into_iter().find(|p| p.name == panel).map(|p| p.config)
}

/// Names of all presets.
pub fn preset_names() -> Vec<String> {
    ["fig2", "fig3", "fig4"]
        .iter()
        .flat_map(|f| presets::figure(f).unwrap().into_iter().map(move |p| format!("{f}/{}", p.name)))
        .collect()
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let loc = Locator { text };
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| loc.line(s));
        let field = line
            .and_then(|l| text.lines().nth(l - 1))
            .and_then(|l| l.split_once('='))
            .map(|(k, _)| k.trim().to_string())
            .filter(|k| !k.is_empty() && !k.starts_with('['));
        ConfigError { line, field, message: e.message().to_string() }
    })?;
    let exp = raw.experiment.unwrap_or_default();
    let boot = raw.bootstrap.unwrap_or_default();

    let mut config = match &raw.preset {
        Some(p) => match preset(p.get_ref()) {
            Some(c) => c,
            None => {
                return loc.err("preset", p.span(), format!("unknown preset; expected one of {}", preset_names().join(", ")))
            }
        },
        None => {
            let model = exp.model.as_ref().ok_or_else(|| missing("model"))?;
            let default_params = match model.get_ref().as_str() {
                "linear-two-param" => ParamVector::pair(1.0, 1.0),
                _ => ParamVector::scalar(1.0),
            };
            for (key, present) in [
                ("theta", exp.theta.is_some()),
                ("noise_var", exp.noise_var.is_some()),
                ("price_range", exp.price_range.is_some()),
            ] {
                if !present {
                    return Err(missing(key));
                }
            }
            ExperimentConfig::new(DemandModel::LinearTwoParam, default_params, 0.0, (1.0, 2.0))
        }
    };

    if let Some(m) = &exp.model {
        let a = match &exp.a {
            Some(a) => Some(loc.positive("a", a)?),
            None => match config.model {
                DemandModel::LinearKnownIntercept { a } | DemandModel::LogLinearKnownIntercept { a } => Some(a),
                _ => None,
            },
        };
        let need_a = |a: Option<f64>| a.ok_or_else(|| missing("a"));
        config.model = match m.get_ref().as_str() {
            "linear" => DemandModel::LinearKnownIntercept { a: need_a(a)? },
            "log-linear" => DemandModel::LogLinearKnownIntercept { a: need_a(a)? },
            "linear-two-param" => DemandModel::LinearTwoParam,
            other => {
                return loc.err(
                    "model",
                    m.span(),
                    format!("unknown model `{other}`; expected linear, log-linear or linear-two-param"),
                )
            }
        };
        let single = config.model.param_len() == 1;
        let defaults: &[PolicyKind] =
            if single { &PolicyKind::ALL } else { &[PolicyKind::Oracle, PolicyKind::Bootstrap] };
        config.policies = defaults.to_vec();
    } else if let Some(a) = &exp.a {
        let value = loc.positive("a", a)?;
        match &mut config.model {
            DemandModel::LinearKnownIntercept { a } | DemandModel::LogLinearKnownIntercept { a } => *a = value,
            _ => return loc.err("a", a.span(), "this model has no known intercept"),
        }
    }

    if let Some(t) = &exp.theta {
        let values = match t.get_ref() {
            RawTheta::Scalar(x) => vec![*x],
            RawTheta::Vector(v) => v.clone(),
        };
        if values.len() != config.model.param_len() {
            return loc.err(
                "theta",
                t.span(),
                format!("{} needs {} value(s), got {}", config.model.name(), config.model.param_len(), values.len()),
            );
        }
        config.true_params = ParamVector::from_slice(&values).map_err(|e| ConfigError {
            line: Some(loc.line(t.span())),
            field: Some("theta".into()),
            message: e.to_string(),
        })?;
        if !(config.true_params.slope() > 0.0 && values.iter().all(|x| x.is_finite())) {
            return loc.err("theta", t.span(), "the slope must be positive and finite");
        }
    }
    if let Some(v) = &exp.noise_var {
        let x = *v.get_ref();
        if !(x >= 0.0 && x.is_finite()) {
            return loc.err("noise_var", v.span(), format!("must be nonnegative, got {x}"));
        }
        config.noise_var = x;
    }
    if let Some(r) = &exp.price_range {
        match r.get_ref().as_slice() {
            &[lo, hi] if lo > 0.0 && lo < hi && hi.is_finite() => config.price_range = (lo, hi),
            _ => return loc.err("price_range", r.span(), "expected [low, high] with 0 < low < high"),
        }
    }
    if let Some(g) = &exp.n_grid {
        if g.get_ref().is_empty() {
            return loc.err("n_grid", g.span(), "must list at least one sample size");
        }
        let mut grid = Vec::with_capacity(g.get_ref().len());
        for &n in g.get_ref() {
            if n < 2 {
                return loc.err("n_grid", g.span(), format!("sample sizes must be at least 2, got {n}"));
            }
            grid.push(n as usize);
        }
        config.n_grid = grid;
    }
    if let Some(r) = &exp.replications {
        config.replications = loc.count("replications", r, 1)?;
    }
    if let Some(s) = &exp.seed {
        config.seed = loc.count("seed", s, 0)? as u64;
    }
    if let Some(p) = &exp.policies {
        let mut kinds = Vec::new();
        for name in p.get_ref() {
            let Some(kind) = PolicyKind::from_column(name) else {
                return loc.err("policies", p.span(), format!("unknown policy `{name}`; expected oracle, dd or boot"));
            };
            if kinds.contains(&kind) {
                return loc.err("policies", p.span(), format!("policy `{name}` listed twice"));
            }
            kinds.push(kind);
        }
        config.policies = kinds;
    }
    if let Some(b) = &exp.antithetic {
        config.antithetic = *b.get_ref();
    }
    if let Some(f) = &exp.truncation_floor {
        config.truncation_floor = loc.positive("truncation_floor", f)?;
    }

    let bc = &mut config.bootstrap;
    match (&boot.resamples, &boot.resamples_per_n) {
        (Some(_), Some(b)) => return loc.err("resamples_per_n", b.span(), "conflicts with `resamples`"),
        (Some(b), None) => bc.resamples = ResampleCount::Fixed(loc.count("resamples", b, 1)?),
        (None, Some(b)) => bc.resamples = ResampleCount::PerObservation(loc.count("resamples_per_n", b, 1)?),
        (None, None) => {}
    }
    if let Some(v) = &boot.search_halfwidth_mult {
        bc.search_halfwidth_mult = loc.positive("search_halfwidth_mult", v)?;
    }
    if let Some(v) = &boot.grid_step_mult {
        bc.grid_step_mult = loc.positive("grid_step_mult", v)?;
    }
    if let Some(v) = &boot.secondary_halfwidth {
        bc.secondary_halfwidth = loc.positive("secondary_halfwidth", v)?;
    }
    if let Some(v) = &boot.secondary_step {
        bc.secondary_step = loc.positive("secondary_step", v)?;
    }
    if let Some(v) = &boot.max_coord_rounds {
        bc.max_coord_rounds = loc.count("max_coord_rounds", v, 1)?;
    }
    if let Some(v) = &boot.antithetic {
        bc.antithetic = *v.get_ref();
    }

    config.validate().map_err(|e| ConfigError { line: None, field: None, message: e.to_string() })?;
    Ok(config)
}
