//! Command-line front end for the pricing-adjustment simulator.
//!
//! Three subcommands: `run` executes one experiment from a config file,
//! `verify` runs the built-in self-checks, and `reproduce` runs every panel
//! of one of the preset figures. Results go to CSV with a JSON manifest
//! beside each file.

pub mod config;
pub mod output;
pub mod verify;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use pto_adjust::simulation::{presets, run_experiment, ExperimentConfig, MetricsRecord};

pub use config::{parse_config, ConfigError};
pub use output::{config_digest, render_csv, RunManifest};
pub use verify::Scope;

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "PTOADJ_THREADS";

pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFY_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("simulation failed: {0}")]
    Simulation(#[from] pto_adjust::Error),
    #[error("{0} check(s) failed")]
    VerifyFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) | CliError::Simulation(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::VerifyFailed(_) => exit::VERIFY_FAILED,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Accepts plain integers and integral floats such as `1e4`.
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return if n >= 1 { Ok(n) } else { Err("must be at least 1".into()) };
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 1.0 && x.fract() == 0.0 && x <= 1e15 => Ok(x as usize),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "pto-adjust", version, about = "Monte Carlo comparison of adjusted predict-then-optimize pricing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunOverrides {
    /// Replications per sample size (accepts `1e4`).
    #[arg(long, value_parser = parse_count)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to $PTOADJ_THREADS, then to all cores.
    #[arg(long, env = THREADS_ENV, value_parser = parse_count)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its CSV and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Run the derivative, gap and multi-parameter self-checks.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        scope: Scope,
    },
    /// Run all four panels of a figure, one CSV per panel.
    Reproduce {
        /// fig2, fig3 or fig4.
        figure: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn apply_overrides(config: &mut ExperimentConfig, o: &RunOverrides) -> Result<(), CliError> {
    if let Some(r) = o.reps {
        config.replications = r;
    }
    if let Some(s) = o.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(())
}

/// Runs every sample size of `config` in order, printing progress.
fn execute(config: &ExperimentConfig, threads: Option<usize>, label: &str) -> Result<Vec<MetricsRecord>, CliError> {
    let pool = pool(threads)?;
    let mut records = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let single = ExperimentConfig { n_grid: vec![n], ..config.clone() };
        let mut r = pool.install(|| run_experiment(&single))?;
        println!("{label}: n={n} done ({} replications)", config.replications);
        records.append(&mut r);
    }
    Ok(records)
}

fn write_outputs(
    config: &ExperimentConfig,
    records: &[MetricsRecord],
    config_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(out, render_csv(config, records)).map_err(io_err(out))?;
    let manifest = RunManifest::new(config_path, out, config, records);
    let mpath = output::manifest_path(out);
    fs::write(&mpath, manifest.to_json()).map_err(io_err(&mpath))?;
    Ok(())
}

/// `run`: config file to CSV plus manifest.
pub fn cmd_run(config_path: &Path, out: &Path, overrides: &RunOverrides) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path).map_err(io_err(config_path))?;
    let mut config =
        parse_config(&text).map_err(|source| CliError::Config { path: config_path.display().to_string(), source })?;
    apply_overrides(&mut config, overrides)?;
    let records = execute(&config, overrides.threads, &out.display().to_string())?;
    write_outputs(&config, &records, Some(config_path), out)
}

/// `verify`: prints one line per check; fails if any check fails.
pub fn cmd_verify(scope: Scope, sink: &mut impl Write) -> Result<(), CliError> {
    let checks = verify::run_scope(scope);
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    let to_io = |source| CliError::Io { path: "stdout".into(), source };
    for c in &checks {
        writeln!(sink, "{c}").map_err(to_io)?;
    }
    writeln!(sink, "{} of {} checks passed", checks.len() - failed.len(), checks.len()).map_err(to_io)?;
    if failed.is_empty() {
        Ok(())
    } else {
        for c in &failed {
            eprintln!("failed: {} {}", c.suite, c.name);
        }
        Err(CliError::VerifyFailed(failed.len()))
    }
}

/// `reproduce`: every panel of a preset figure into `dir/<panel>.csv`.
pub fn cmd_reproduce(figure: &str, dir: &Path, overrides: &RunOverrides) -> Result<Vec<PathBuf>, CliError> {
    let panels = presets::figure(figure)
        .ok_or_else(|| CliError::Usage(format!("unknown figure `{figure}`; expected fig2, fig3 or fig4")))?;
    let mut written = Vec::new();
    for panel in panels {
        let mut config = panel.config;
        apply_overrides(&mut config, overrides)?;
        let out = dir.join(format!("{}.csv", panel.name));
        let records = execute(&config, overrides.threads, &format!("{figure}/{}", panel.name))?;
        write_outputs(&config, &records, None, &out)?;
        written.push(out);
    }
    Ok(written)
}

/// Parses `args` and dispatches; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let result = match &cli.command {
        Command::Run { config, out, overrides } => cmd_run(config, out, overrides),
        Command::Verify { scope } => cmd_verify(*scope, &mut std::io::stdout()),
        Command::Reproduce { figure, out, overrides } => cmd_reproduce(figure, out, overrides).map(|_| ()),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
