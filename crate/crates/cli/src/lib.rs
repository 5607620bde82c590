//! Experiment runner for the `qpe-mproj` binary.
//!
//! [`run`] loads and validates a JSON config, dispatches to a runner in
//! [`experiments`] and writes CSV (or JSON for `bounds`) with a `#` metadata
//! header. Validation failures and runtime failures are kept apart so the
//! binary can map them to distinct exit codes.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

use config::{ConfigError, ExperimentConfig, Kind};
use output::{emit, render_csv, render_json, Metadata};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Runtime(e)
    }
}

/// Resolves the effective config: file contents, then command-line
/// overrides.
pub fn load_config(opts: &Options) -> Result<ExperimentConfig, RunError> {
    let mut c = match &opts.config {
        Some(p) => ExperimentConfig::load(p)??,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = opts.seed {
        c.seed = Some(s);
    }
    if let Some(o) = &opts.out {
        c.output = Some(o.clone());
    }
    Ok(c)
}

/// Runs one subcommand and returns the rendered output (also written to the
/// configured path or stdout).
pub fn run(kind: Kind, opts: &Options) -> Result<String, RunError> {
    if opts.threads == Some(0) {
        return Err(ConfigError("--threads must be at least 1".into()).into());
    }
    let c = load_config(opts)?;
    if let Some(n) = opts.threads {
        qpe_mproj::par::configure_threads(n);
    }
    let text = render(kind, &c)?;
    emit(c.output.as_deref(), &text)?;
    Ok(text)
}

/// Validates `c` for `kind`, runs it and renders the output.
pub fn render(kind: Kind, c: &ExperimentConfig) -> Result<String, RunError> {
    use experiments as ex;
    let mut meta = Metadata::new(kind.name(), c.seed(), c.hash(kind));
    let text = match kind {
        Kind::Spectrum => {
            let s = config::spectrum_settings(c)?;
            let (table, extra) = ex::run_spectrum(&s)?;
            meta.extra = extra;
            render_csv(&meta, &table)
        }
        Kind::Sample => {
            let s = config::sample_settings(c)?;
            let (table, extra) = ex::run_sample(&s)?;
            meta.extra = extra;
            render_csv(&meta, &table)
        }
        Kind::Estimate => {
            let s = config::estimate_settings(c)?;
            let text = std::fs::read_to_string(&s.input)
                .map_err(|e| anyhow::anyhow!("cannot read samples {}: {e}", s.input.display()))?;
            let samples = output::parse_samples(&text)?;
            let rows = ex::run_estimate(&s, &samples)?;
            render_csv(&meta, &ex::estimate_table(&rows))
        }
        Kind::Bounds => {
            let s = config::bounds_settings(c)?;
            render_json(&meta, ex::run_bounds(&s)?)
        }
        Kind::Fig3 => {
            let s = config::fig3_settings(c)?;
            render_csv(&meta, &ex::fig3_table(&ex::run_fig3(&s)?))
        }
        Kind::Fig5Shots | Kind::Fig5Qubits => {
            let s = config::fig5_settings(c, kind)?;
            render_csv(&meta, &ex::fig5_table(&ex::run_fig5(&s)?))
        }
    };
    Ok(text)
}
