//! Flat `key = value` configuration with command-line overrides.
//!
//! Keys are the long flag names (`mu-seed`, `n-datasets`, `B`, ...);
//! underscores are accepted in place of hyphens. Lines starting with `#` are
//! comments. A value given on the command line replaces the file's value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use stou_core::bootstrap::BootstrapSimulator;
use stou_core::cl::{ClParam, EstimationScenario, PairWeightSpec, WindowSpec};
use stou_core::sim::{GridSimConfig, MemoryBudget};
use stou_core::{Lattice64, StouParams64};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "STOU_WORKERS";

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("lambda", "true temporal decay rate"),
    ("c", "true cone slope"),
    ("tau", "true Levy seed standard deviation"),
    ("mu-seed", "true Levy seed mean"),
    ("nx", "spatial grid points"),
    ("nt", "temporal grid points"),
    ("dx", "spatial spacing (default 0.05)"),
    ("dt", "temporal spacing (default 0.05)"),
    ("method", "exact|grid for simulate; cl-sandwich|mc-exact|mc-grid otherwise"),
    ("scenario", "comma-separated free set, e.g. lambda,c_tilde"),
    ("B", "bootstrap replicates per dataset"),
    ("n-datasets", "datasets in an experiment"),
    ("level", "nominal interval coverage (default 0.95)"),
    ("cutoff", "pair cutoff in grid steps (default 3)"),
    ("window-nx", "window width in grid points (default 11)"),
    ("window-nt", "window height in grid points (default 11)"),
    ("step-x", "window stride along space (default 5)"),
    ("step-t", "window stride along time (default 5)"),
    ("truncation-p", "grid simulator truncation depth in dt units (default 300)"),
    ("cells-per-obs", "grid simulator refinement (default 1)"),
    ("max-lag", "moments-matching lags per axis (default 5)"),
    ("max-points", "largest lattice for exact simulation (default 10201)"),
    ("seed", "master seed (default 0)"),
    ("workers", "worker threads (default $STOU_WORKERS or all cores)"),
    ("input", "field CSV to analyse"),
    ("out", "output file (simulate, fit-*, ci) or directory (coverage, proxy)"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn canonical_key(key: &str) -> Result<&'static str, ConfigError> {
    let k = key.trim().replace('_', "-");
    let k = if k == "b" { "B".to_string() } else { k };
    KEYS.iter()
        .map(|(name, _)| *name)
        .find(|name| *name == k)
        .ok_or_else(|| ConfigError::new(key.trim(), "unknown configuration key"))
}

/// Unparsed key-value pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(format!("line {}", n + 1), "expected `key = value`")
            })?;
            out.set(k, v)?;
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = canonical_key(key)?;
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    /// Overrides `self` with every key present in `other`.
    pub fn overlay(&mut self, other: &RawConfig) {
        for (k, v) in &other.values {
            self.values.insert(k, v.clone());
        }
    }

    pub fn raw(&self, key: &'static str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError::new(key, format!("`{v}`: {e}")))
            })
            .transpose()
    }

    fn require<T: FromStr>(&self, key: &'static str, why: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| ConfigError::new(key, format!("required {why}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    FitMm,
    FitCl,
    Ci,
    Coverage,
    Proxy,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::FitMm => "fit-mm",
            CommandKind::FitCl => "fit-cl",
            CommandKind::Ci => "ci",
            CommandKind::Coverage => "coverage",
            CommandKind::Proxy => "proxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMethod {
    Exact,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    ClSandwich,
    McExact,
    McGrid,
}

impl CiMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CiMethod::ClSandwich => "cl-sandwich",
            CiMethod::McExact => "mc-exact",
            CiMethod::McGrid => "mc-grid",
        }
    }
}

/// Method field, whose meaning depends on the command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sim(SimMethod),
    Ci(CiMethod),
    None,
}

/// Fully validated settings of one invocation.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub truth: Option<StouParams64>,
    pub lattice: Option<Lattice64>,
    pub method: Method,
    pub scenario: Option<Vec<ClParam>>,
    pub replicates: usize,
    pub n_datasets: usize,
    pub level: f64,
    pub weights: PairWeightSpec,
    pub windows: WindowSpec,
    pub grid: GridSimConfig,
    pub max_lag: usize,
    pub budget: MemoryBudget,
    pub seed: u64,
    pub workers: usize,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Resolved key-value pairs, as recorded in the manifest.
    pub resolved: RawConfig,
}

fn truth_from(raw: &RawConfig) -> Result<Option<StouParams64>, ConfigError> {
    let keys = ["lambda", "c", "tau", "mu-seed"];
    let given: Vec<&str> = keys.iter().copied().filter(|k| raw.raw(k).is_some()).collect();
    if given.is_empty() {
        return Ok(None);
    }
    if let Some(missing) = keys.iter().find(|k| raw.raw(k).is_none()) {
        return Err(ConfigError::new(
            *missing,
            "required when any true parameter is given",
        ));
    }
    let lambda: f64 = raw.require("lambda", "")?;
    let c: f64 = raw.require("c", "")?;
    let tau: f64 = raw.require("tau", "")?;
    let mu_seed: f64 = raw.require("mu-seed", "")?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(ConfigError::new("tau", format!("must be positive, got {tau}")));
    }
    StouParams64::from_natural(lambda, c, mu_seed, tau * tau)
        .map(Some)
        .map_err(|e| {
            let field = match &e {
                stou_core::StouError::InvalidParameter { name, .. } => match *name {
                    "tau2" => "tau",
                    "mu_seed" => "mu-seed",
                    other => other,
                },
                _ => "lambda",
            };
            ConfigError::new(field, e.to_string())
        })
}

fn lattice_from(raw: &RawConfig) -> Result<Option<Lattice64>, ConfigError> {
    let nx: Option<usize> = raw.get("nx")?;
    let nt: Option<usize> = raw.get("nt")?;
    match (nx, nt) {
        (None, None) => Ok(None),
        (Some(_), None) => Err(ConfigError::new("nt", "required together with nx")),
        (None, Some(_)) => Err(ConfigError::new("nx", "required together with nt")),
        (Some(nx), Some(nt)) => {
            let dx = raw.get("dx")?.unwrap_or(0.05);
            let dt = raw.get("dt")?.unwrap_or(0.05);
            Lattice64::new(nx, nt, dx, dt)
                .map(Some)
                .map_err(|e| ConfigError::new("nx", e.to_string()))
        }
    }
}

impl ExperimentConfig {
    pub fn from_raw(command: CommandKind, raw: &RawConfig) -> Result<Self, ConfigError> {
        use CommandKind::*;
        let truth = truth_from(raw)?;
        let lattice = lattice_from(raw)?;
        let method_str = raw.raw("method");
        let method = match command {
            Simulate => Method::Sim(match method_str.unwrap_or("exact") {
                "exact" => SimMethod::Exact,
                "grid" => SimMethod::Grid,
                other => {
                    return Err(ConfigError::new("method", format!("`{other}` is not exact or grid")))
                }
            }),
            FitMm | FitCl => Method::None,
            Ci | Coverage | Proxy => {
                let m = method_str.ok_or_else(|| {
                    ConfigError::new("method", "required (cl-sandwich, mc-exact or mc-grid)")
                })?;
                let m = match m {
                    "cl-sandwich" => CiMethod::ClSandwich,
                    "mc-exact" => CiMethod::McExact,
                    "mc-grid" => CiMethod::McGrid,
                    other => {
                        return Err(ConfigError::new(
                            "method",
                            format!("`{other}` is not cl-sandwich, mc-exact or mc-grid"),
                        ))
                    }
                };
                if command == Proxy && m == CiMethod::ClSandwich {
                    return Err(ConfigError::new(
                        "method",
                        "the coverage proxy needs a Monte Carlo method",
                    ));
                }
                Method::Ci(m)
            }
        };

        let needs_scenario = command == FitCl || method == Method::Ci(CiMethod::ClSandwich);
        let scenario = match raw.raw("scenario") {
            Some(s) => {
                let free = EstimationScenario::<f64>::parse_free_set(s)
                    .map_err(|e| ConfigError::new("scenario", e.to_string()))?;
                if free.is_empty() {
                    return Err(ConfigError::new("scenario", "must free at least one parameter"));
                }
                Some(free)
            }
            None if needs_scenario => {
                return Err(ConfigError::new("scenario", "required for composite likelihood"))
            }
            None => None,
        };

        let is_mc = matches!(method, Method::Ci(CiMethod::McExact | CiMethod::McGrid));
        let replicates = if is_mc {
            let b: usize = raw.require("B", "for Monte Carlo intervals")?;
            if b < stou_core::bootstrap::MIN_REPLICATES {
                return Err(ConfigError::new(
                    "B",
                    format!("must be at least {}", stou_core::bootstrap::MIN_REPLICATES),
                ));
            }
            b
        } else {
            raw.get("B")?.unwrap_or(0)
        };

        let experiment = matches!(command, Coverage | Proxy);
        let n_datasets = if experiment {
            let n: usize = raw.require("n-datasets", "for experiments")?;
            if n < 10 {
                return Err(ConfigError::new("n-datasets", "must be at least 10"));
            }
            n
        } else {
            raw.get("n-datasets")?.unwrap_or(0)
        };
        if (experiment || command == Simulate) && truth.is_none() {
            return Err(ConfigError::new("lambda", "true parameters (lambda, c, tau, mu-seed) are required"));
        }
        if (experiment || command == Simulate) && lattice.is_none() {
            return Err(ConfigError::new("nx", "lattice size (nx, nt) is required"));
        }
        let input: Option<PathBuf> = raw.get("input")?;
        if matches!(command, FitMm | FitCl | Ci) && input.is_none() {
            return Err(ConfigError::new("input", "required field file"));
        }

        let level: f64 = raw.get("level")?.unwrap_or(0.95);
        if !(0.0..1.0).contains(&level) {
            return Err(ConfigError::new("level", format!("must lie in [0, 1), got {level}")));
        }
        let weights = PairWeightSpec::new(raw.get("cutoff")?.unwrap_or(PairWeightSpec::DEFAULT_CUTOFF))
            .map_err(|e| ConfigError::new("cutoff", e.to_string()))?;
        let dw = WindowSpec::default();
        let windows = WindowSpec {
            window_nx: raw.get("window-nx")?.unwrap_or(dw.window_nx),
            window_nt: raw.get("window-nt")?.unwrap_or(dw.window_nt),
            step_x: raw.get("step-x")?.unwrap_or(dw.step_x),
            step_t: raw.get("step-t")?.unwrap_or(dw.step_t),
        };
        if method == Method::Ci(CiMethod::ClSandwich) {
            if let Some(l) = &lattice {
                windows
                    .validate(l)
                    .map_err(|e| ConfigError::new("window-nx", e.to_string()))?;
            }
        }
        let dg = GridSimConfig::default();
        let grid = GridSimConfig {
            truncation_p: raw.get("truncation-p")?.unwrap_or(dg.truncation_p),
            cells_per_obs_cell: raw.get("cells-per-obs")?.unwrap_or(dg.cells_per_obs_cell),
        };
        grid.validate()
            .map_err(|e| ConfigError::new("truncation-p", e.to_string()))?;
        let max_lag: usize = raw.get("max-lag")?.unwrap_or(stou_core::mm::DEFAULT_MAX_LAG);
        if max_lag == 0 {
            return Err(ConfigError::new("max-lag", "must be at least 1"));
        }
        let budget = MemoryBudget {
            max_points: raw.get("max-points")?.unwrap_or(MemoryBudget::default().max_points),
        };
        if let (Some(l), true) = (&lattice, experiment || method == Method::Sim(SimMethod::Exact)) {
            budget
                .check(l.len())
                .map_err(|e| ConfigError::new("max-points", e.to_string()))?;
        }
        let seed: u64 = raw.get("seed")?.unwrap_or(0);
        let workers = match raw.get::<usize>("workers")? {
            Some(0) => return Err(ConfigError::new("workers", "must be at least 1")),
            Some(w) => w,
            None => match std::env::var(WORKERS_ENV) {
                Ok(v) => match v.trim().parse::<usize>() {
                    Ok(w) if w > 0 => w,
                    _ => {
                        return Err(ConfigError::new(
                            "workers",
                            format!("${WORKERS_ENV} must be a positive integer, got `{v}`"),
                        ))
                    }
                },
                Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
            },
        };

        let mut resolved = raw.clone();
        resolved.values.insert("seed", seed.to_string());
        resolved.values.insert("workers", workers.to_string());
        resolved.values.insert("level", level.to_string());
        Ok(Self {
            command,
            truth,
            lattice,
            method,
            scenario,
            replicates,
            n_datasets,
            level,
            weights,
            windows,
            grid,
            max_lag,
            budget,
            seed,
            workers,
            input,
            out: raw.get("out")?,
            resolved,
        })
    }

    pub fn bootstrap_simulator(&self) -> BootstrapSimulator {
        match self.method {
            Method::Ci(CiMethod::McGrid) => BootstrapSimulator::Grid(self.grid),
            _ => BootstrapSimulator::Exact(self.budget),
        }
    }

    /// `key = value` lines of the resolved configuration, loadable with `--config`.
    pub fn to_config_text(&self) -> String {
        self.resolved
            .values
            .iter()
            .filter(|(k, _)| **k != "workers")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
