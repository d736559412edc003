//! CSV rendering and run manifests.

use std::path::Path;

use pto_adjust::rng::NORMAL_SAMPLER_ID;
use pto_adjust::simulation::{ExperimentConfig, MetricsRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats `x` with 10 significant digits, `%g` style: fixed notation for
/// moderate exponents, scientific otherwise, trailing zeros dropped.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.0".into();
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let mut s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.truncate(s.trim_end_matches('0').len());
            if s.ends_with('.') {
                s.push('0');
            }
        } else {
            s.push_str(".0");
        }
        s
    } else {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp}")
    }
}

/// Column names for a config: `n`, `pto`, then one per policy.
pub fn csv_header(config: &ExperimentConfig) -> String {
    let mut cols = vec!["n", "pto"];
    cols.extend(config.policies.iter().map(|p| p.column()));
    cols.join(",")
}

/// The CSV text for a finished experiment.
pub fn render_csv(config: &ExperimentConfig, records: &[MetricsRecord]) -> String {
    let mut out = csv_header(config);
    out.push('\n');
    for r in records {
        out.push_str(&r.n.to_string());
        out.push(',');
        out.push_str(&format_number(r.pto_relative.mean));
        for kind in &config.policies {
            out.push(',');
            out.push_str(&format_number(r.improvement(*kind).map_or(f64::NAN, |s| s.mean)));
        }
        out.push('\n');
    }
    out
}

/// Everything that determines the CSV bytes.
#[derive(Serialize)]
struct DigestInput<'a> {
    config: &'a ExperimentConfig,
    sampler: &'a str,
    version: &'a str,
}

/// SHA-256 over the resolved config, the normal sampler id and the tool version.
pub fn config_digest(config: &ExperimentConfig) -> String {
    let input = DigestInput { config, sampler: NORMAL_SAMPLER_ID, version: TOOL_VERSION };
    let bytes = serde_json::to_vec(&input).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Per-n diagnostics that do not fit the CSV layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub n: usize,
    pub pto_stderr: f64,
    pub improvement_stderr: Vec<(String, f64)>,
    pub truncation_rate: f64,
    pub invalid: usize,
    pub pto_zero: usize,
}

impl RowDiagnostics {
    pub fn from_record(r: &MetricsRecord) -> Self {
        Self {
            n: r.n,
            pto_stderr: r.pto_relative.stderr,
            improvement_stderr: r.improvement_by_policy.iter().map(|(k, s)| (k.column().to_string(), s.stderr)).collect(),
            truncation_rate: r.truncation_rate,
            invalid: r.invalid,
            pto_zero: r.pto_zero,
        }
    }
}

/// Sidecar written next to every CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub output_path: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub tool_version: String,
    pub sampler: String,
    pub config_digest: String,
    pub diagnostics: Vec<RowDiagnostics>,
}

impl RunManifest {
    pub fn new(config_path: Option<&Path>, output_path: &Path, config: &ExperimentConfig, records: &[MetricsRecord]) -> Self {
        Self {
            config_path: config_path.map(|p| p.display().to_string()),
            output_path: output_path.display().to_string(),
            config: config.clone(),
            seed: config.seed,
            tool_version: TOOL_VERSION.into(),
            sampler: NORMAL_SAMPLER_ID.into(),
            config_digest: config_digest(config),
            diagnostics: records.iter().map(RowDiagnostics::from_record).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
