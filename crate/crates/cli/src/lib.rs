//! Experiment runner behind the `stou` binary.

pub mod commands;
pub mod config;
pub mod fieldio;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{CommandKind, ConfigError, ExperimentConfig, RawConfig};

#[derive(Debug, Parser)]
#[command(name = "stou", version, about = "Simulate STOU fields and build parameter confidence intervals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one field and write it as CSV.
    Simulate(Opts),
    /// Moments-matching estimates of one field.
    FitMm(Opts),
    /// Composite-likelihood estimates of one field.
    FitCl(Opts),
    /// Confidence intervals for one field.
    Ci(Opts),
    /// Interval coverage over simulated datasets.
    Coverage(Opts),
    /// Coverage proxy over simulated datasets.
    Proxy(Opts),
}

impl Command {
    fn split(&self) -> (CommandKind, &Opts) {
        match self {
            Command::Simulate(o) => (CommandKind::Simulate, o),
            Command::FitMm(o) => (CommandKind::FitMm, o),
            Command::FitCl(o) => (CommandKind::FitCl, o),
            Command::Ci(o) => (CommandKind::Ci, o),
            Command::Coverage(o) => (CommandKind::Coverage, o),
            Command::Proxy(o) => (CommandKind::Proxy, o),
        }
    }
}

/// Options shared by every subcommand; see [`config::KEYS`] for their meaning.
/// Values are parsed after merging with `--config`.
#[derive(Debug, Default, Args)]
pub struct Opts {
    /// Flat `key = value` file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub mu_seed: Option<String>,
    #[arg(long)]
    pub nx: Option<String>,
    #[arg(long)]
    pub nt: Option<String>,
    #[arg(long)]
    pub dx: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long = "B")]
    pub b: Option<String>,
    #[arg(long)]
    pub n_datasets: Option<String>,
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long)]
    pub cutoff: Option<String>,
    #[arg(long)]
    pub window_nx: Option<String>,
    #[arg(long)]
    pub window_nt: Option<String>,
    #[arg(long)]
    pub step_x: Option<String>,
    #[arg(long)]
    pub step_t: Option<String>,
    #[arg(long)]
    pub truncation_p: Option<String>,
    #[arg(long)]
    pub cells_per_obs: Option<String>,
    #[arg(long)]
    pub max_lag: Option<String>,
    #[arg(long)]
    pub max_points: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
}

impl Opts {
    fn to_raw(&self) -> Result<RawConfig, ConfigError> {
        let pairs = [
            ("lambda", &self.lambda),
            ("c", &self.c),
            ("tau", &self.tau),
            ("mu-seed", &self.mu_seed),
            ("nx", &self.nx),
            ("nt", &self.nt),
            ("dx", &self.dx),
            ("dt", &self.dt),
            ("method", &self.method),
            ("scenario", &self.scenario),
            ("B", &self.b),
            ("n-datasets", &self.n_datasets),
            ("level", &self.level),
            ("cutoff", &self.cutoff),
            ("window-nx", &self.window_nx),
            ("window-nt", &self.window_nt),
            ("step-x", &self.step_x),
            ("step-t", &self.step_t),
            ("truncation-p", &self.truncation_p),
            ("cells-per-obs", &self.cells_per_obs),
            ("max-lag", &self.max_lag),
            ("max-points", &self.max_points),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("input", &self.input),
            ("out", &self.out),
        ];
        let mut raw = RawConfig::default();
        for (k, v) in pairs {
            if let Some(v) = v {
                raw.set(k, v)?;
            }
        }
        Ok(raw)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    /// 2 for configuration errors, 3 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Merges `--config` with the flags and validates the result.
pub fn resolve(command: &Command) -> Result<ExperimentConfig, CliError> {
    let (kind, opts) = command.split();
    let mut raw = match &opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                ConfigError::new("config", format!("cannot read {}: {e}", path.display()))
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    raw.overlay(&opts.to_raw()?);
    Ok(ExperimentConfig::from_raw(kind, &raw)?)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.command)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Runtime(e.into()))?;
    pool.install(|| commands::run(&cfg)).map_err(CliError::Runtime)
}
