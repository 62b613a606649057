//! Monte Carlo (parametric bootstrap) intervals, coverage experiments and the
//! coverage proxy.
//!
//! A Monte Carlo interval fits the observed field by moments matching, draws
//! `B` new fields from the fitted model on the same lattice, refits each one and
//! reads the interval off the empirical quantiles of the re-estimates.

use rayon::prelude::*;

use crate::cl::{reported_parameters, sandwich_ci, ClParam, EstimationScenario, PairWeightSpec, ThetaCl, WindowSpec};
use crate::error::{Result, StouError};
use crate::interval::{check_level, IntervalEstimate};
use crate::mm::fit_mm;
use crate::model::{CorrKind, FieldSample, Lattice, ParamName, StouParams};
use crate::optim::NelderMead;
use crate::rng::{stream, SeedPath};
use crate::scalar::Real;
use crate::sim::{
    build_covariance, cholesky_factor, simulate_exact, CholeskyFactor, GridSimConfig,
    GridSimulator, MemoryBudget,
};

/// Smallest bootstrap size accepted by [`mc_ci`] and [`coverage_proxy`].
pub const MIN_REPLICATES: usize = 20;

/// Empirical quantile of sorted data: linear interpolation between order
/// statistics at 1-based position `1 + (n - 1) q`.
pub fn quantile_sorted<T: Real>(sorted: &[T], q: T) -> T {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let pos = T::of_usize(n - 1) * q.max(T::zero()).min(T::one());
    let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = pos - T::of_usize(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Right-continuous ECDF of sorted data, `#{v <= x} / n`.
pub fn ecdf_sorted<T: Real>(sorted: &[T], x: T) -> T {
    let count = sorted.partition_point(|&v| v <= x);
    T::of_usize(count) / T::of_usize(sorted.len())
}

fn sorted_copy<T: Real>(v: &[T]) -> Vec<T> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite estimates"));
    s
}

/// `(lower, median, upper)` quantiles at `(1 - level)/2`, `1/2`, `(1 + level)/2`.
pub fn level_quantiles<T: Real>(sorted: &[T], level: T) -> (T, T, T) {
    let half = T::lit(0.5);
    (
        quantile_sorted(sorted, (T::one() - level) * half),
        quantile_sorted(sorted, half),
        quantile_sorted(sorted, (T::one() + level) * half),
    )
}

/// Coverage proxy
/// `ECDF(theta_E + (theta_M - theta_L)) - ECDF((theta_E - (theta_U - theta_M))⁻)`
/// where `theta_L`, `theta_M`, `theta_U` are the level quantiles of `estimates`,
/// i.e. the fraction of estimates inside the reflected closed interval.
pub fn coverage_proxy<T: Real>(estimates: &[T], theta_e: T, level: T) -> Result<T> {
    check_level(level)?;
    if estimates.len() < MIN_REPLICATES {
        return Err(StouError::TooFewEstimates {
            needed: MIN_REPLICATES,
            found: estimates.len(),
        });
    }
    let sorted = sorted_copy(estimates);
    let (lo, med, hi) = level_quantiles(&sorted, level);
    // closed interval: the lower end uses the left limit of the ECDF
    let upper = theta_e + (med - lo);
    let lower = theta_e - (hi - med);
    let below = sorted.partition_point(|&v| v < lower);
    Ok(ecdf_sorted(&sorted, upper) - T::of_usize(below) / T::of_usize(sorted.len()))
}

/// Simulator used to draw bootstrap fields from the fitted model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BootstrapSimulator {
    Exact(MemoryBudget),
    Grid(GridSimConfig),
}

impl Default for BootstrapSimulator {
    fn default() -> Self {
        BootstrapSimulator::Exact(MemoryBudget::default())
    }
}

/// A simulator prepared for one parameter vector.
enum Prepared<T> {
    Exact { factor: CholeskyFactor<T>, mu: T },
    Grid(GridSimulator<T>),
}

impl<T: Real> Prepared<T> {
    fn new(sim: BootstrapSimulator, params: &StouParams<T>, lattice: &Lattice<T>) -> Result<Self> {
        Ok(match sim {
            BootstrapSimulator::Exact(budget) => {
                let cov = build_covariance(params, lattice, CorrKind::Canonical, budget)?;
                Prepared::Exact {
                    factor: cholesky_factor(&cov)?,
                    mu: params.mu(),
                }
            }
            BootstrapSimulator::Grid(cfg) => Prepared::Grid(GridSimulator::new(params, lattice, cfg)?),
        })
    }

    fn draw(&self, lattice: &Lattice<T>, seed: u64) -> Result<FieldSample<T>> {
        let mut rng = stream(seed);
        match self {
            Prepared::Exact { factor, mu } => simulate_exact(factor, *mu, lattice, &mut rng),
            Prepared::Grid(g) => g.simulate(&mut rng),
        }
    }
}

/// Exact simulator for one parameter vector, reusable across many draws.
pub struct ExactSampler<T> {
    lattice: Lattice<T>,
    prepared: Prepared<T>,
}

impl<T: Real> ExactSampler<T> {
    pub fn new(params: &StouParams<T>, lattice: &Lattice<T>, budget: MemoryBudget) -> Result<Self> {
        Ok(Self {
            lattice: *lattice,
            prepared: Prepared::new(BootstrapSimulator::Exact(budget), params, lattice)?,
        })
    }

    pub fn draw(&self, seed: u64) -> Result<FieldSample<T>> {
        self.prepared.draw(&self.lattice, seed)
    }
}

/// Settings shared by every Monte Carlo interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings<T> {
    pub replicates: usize,
    pub level: T,
    pub simulator: BootstrapSimulator,
    pub max_lag: usize,
}

impl<T: Real> Default for McSettings<T> {
    fn default() -> Self {
        Self {
            replicates: 100,
            level: T::lit(0.95),
            simulator: BootstrapSimulator::default(),
            max_lag: crate::mm::DEFAULT_MAX_LAG,
        }
    }
}

/// Result of one parametric bootstrap.
#[derive(Debug, Clone)]
pub struct BootstrapRun<T> {
    /// Moments-matching fit of the observed field (`theta_E`).
    pub fitted: StouParams<T>,
    /// Successful refits, in replicate order.
    pub replicates: Vec<StouParams<T>>,
    /// Indices of replicates whose refit failed.
    pub dropped: Vec<usize>,
    pub intervals: Vec<IntervalEstimate<T>>,
}

impl<T: Real> BootstrapRun<T> {
    pub fn interval(&self, p: ParamName) -> Option<&IntervalEstimate<T>> {
        self.intervals.iter().find(|iv| iv.parameter == p)
    }

    /// Re-estimates of one parameter, in replicate order.
    pub fn estimates(&self, p: ParamName) -> Vec<T> {
        self.replicates.iter().map(|r| r.get(p)).collect()
    }

    /// Coverage proxy of parameter `p` around the fitted value.
    pub fn proxy(&self, p: ParamName, level: T) -> Result<T> {
        coverage_proxy(&self.estimates(p), self.fitted.get(p), level)
    }
}

/// Monte Carlo interval for `(lambda, c, mu_seed, tau, mu, sigma2)`.
///
/// Replicate `r` draws from the stream [`SeedPath::replicate_seed`]`(r)`, so
/// the result does not depend on the number of worker threads.
pub fn mc_ci<T: Real>(
    field: &FieldSample<T>,
    settings: &McSettings<T>,
    seeds: SeedPath,
) -> Result<BootstrapRun<T>> {
    check_level(settings.level)?;
    if settings.replicates < MIN_REPLICATES {
        return Err(StouError::TooFewEstimates {
            needed: MIN_REPLICATES,
            found: settings.replicates,
        });
    }
    let lattice = field.lattice();
    let fitted = fit_mm(field, settings.max_lag)?;
    let sampler = Prepared::new(settings.simulator, &fitted, lattice)?;
    let refits: Vec<Result<StouParams<T>>> = (0..settings.replicates)
        .into_par_iter()
        .map(|r| {
            let f = sampler.draw(lattice, seeds.replicate_seed(r))?;
            fit_mm(&f, settings.max_lag)
        })
        .collect();
    let mut replicates = Vec::with_capacity(refits.len());
    let mut dropped = Vec::new();
    for (r, res) in refits.into_iter().enumerate() {
        match res {
            Ok(p) => replicates.push(p),
            Err(e) => {
                log::debug!("bootstrap replicate {r} dropped: {e}");
                dropped.push(r);
            }
        }
    }
    if dropped.len() * 10 > settings.replicates {
        return Err(StouError::FailureRateExceeded {
            failed: dropped.len(),
            total: settings.replicates,
        });
    }
    if !dropped.is_empty() {
        log::info!(
            "{} of {} bootstrap refits failed and were dropped",
            dropped.len(),
            settings.replicates
        );
    }
    let intervals = ParamName::MONTE_CARLO
        .iter()
        .map(|&p| {
            let sorted = sorted_copy(&replicates.iter().map(|r| r.get(p)).collect::<Vec<_>>());
            let (lower, median, upper) = level_quantiles(&sorted, settings.level);
            IntervalEstimate {
                parameter: p,
                point: fitted.get(p),
                lower,
                median,
                upper,
                level: settings.level,
            }
        })
        .collect();
    Ok(BootstrapRun {
        fitted,
        replicates,
        dropped,
        intervals,
    })
}

/// Coverage of one parameter across datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageEntry<T> {
    pub parameter: ParamName,
    pub level: T,
    pub datasets: usize,
    pub hits: usize,
}

impl<T: Real> CoverageEntry<T> {
    pub fn rate(&self) -> T {
        if self.datasets == 0 {
            T::nan()
        } else {
            T::of_usize(self.hits) / T::of_usize(self.datasets)
        }
    }

    /// Binomial standard error `sqrt(r (1 - r) / n)`.
    pub fn standard_error(&self) -> T {
        binomial_se(self.rate(), self.datasets)
    }
}

pub fn binomial_se<T: Real>(rate: T, n: usize) -> T {
    (rate * (T::one() - rate) / T::of_usize(n)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport<T> {
    pub entries: Vec<CoverageEntry<T>>,
    /// Datasets whose interval construction failed; excluded from every entry.
    pub failed: usize,
}

impl<T: Real> CoverageReport<T> {
    pub fn entry(&self, p: ParamName) -> Option<&CoverageEntry<T>> {
        self.entries.iter().find(|e| e.parameter == p)
    }

    fn tally(params: &[ParamName], level: T, outcomes: &[DatasetOutcome<T>]) -> Self {
        let mut entries: Vec<CoverageEntry<T>> = params
            .iter()
            .map(|&p| CoverageEntry {
                parameter: p,
                level,
                datasets: 0,
                hits: 0,
            })
            .collect();
        let mut failed = 0;
        for o in outcomes {
            let Ok(rows) = &o.rows else {
                failed += 1;
                continue;
            };
            for e in entries.iter_mut() {
                if let Some(row) = rows.iter().find(|r| r.interval.parameter == e.parameter) {
                    e.datasets += 1;
                    e.hits += usize::from(row.hit);
                }
            }
        }
        Self { entries, failed }
    }
}

/// One interval from one dataset, scored against the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredInterval<T> {
    pub interval: IntervalEstimate<T>,
    pub true_value: T,
    pub hit: bool,
    /// Coverage proxy around the dataset's own estimate (Monte Carlo only).
    pub proxy: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOutcome<T> {
    pub index: usize,
    /// Seed of the dataset's simulation stream.
    pub seed: u64,
    pub rows: Result<Vec<ScoredInterval<T>>>,
}

#[derive(Debug, Clone)]
pub struct CoverageExperiment<T> {
    pub report: CoverageReport<T>,
    pub datasets: Vec<DatasetOutcome<T>>,
}

impl<T: Real> CoverageExperiment<T> {
    /// Mean and standard error of the per-dataset coverage proxies of `p`.
    pub fn mean_proxy(&self, p: ParamName) -> Option<(T, T, usize)> {
        let vals: Vec<T> = self
            .datasets
            .iter()
            .filter_map(|d| d.rows.as_ref().ok())
            .filter_map(|rows| rows.iter().find(|r| r.interval.parameter == p))
            .filter_map(|r| r.proxy)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let n = T::of_usize(vals.len());
        let mean = vals.iter().copied().sum::<T>() / n;
        let var = if vals.len() > 1 {
            vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one())
        } else {
            T::zero()
        };
        Some((mean, (var / n).sqrt(), vals.len()))
    }
}

/// Shared experiment inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSetup<T> {
    pub truth: StouParams<T>,
    pub lattice: Lattice<T>,
    pub n_datasets: usize,
    pub master_seed: u64,
    /// Budget for the exact simulator of the observed datasets.
    pub budget: MemoryBudget,
}

impl<T: Real> ExperimentSetup<T> {
    fn validate(&self) -> Result<()> {
        if self.n_datasets < 10 {
            return Err(StouError::InvalidSpec(format!(
                "coverage experiments need at least 10 datasets, got {}",
                self.n_datasets
            )));
        }
        Ok(())
    }
}

/// Monte Carlo coverage experiment. Observed datasets always come from the exact
/// simulator at the true parameters; `settings.simulator` only drives the
/// bootstrap.
pub fn coverage_experiment<T: Real>(
    setup: &ExperimentSetup<T>,
    settings: &McSettings<T>,
) -> Result<CoverageExperiment<T>> {
    setup.validate()?;
    check_level(settings.level)?;
    let data = ExactSampler::new(&setup.truth, &setup.lattice, setup.budget)?;
    let datasets: Vec<DatasetOutcome<T>> = (0..setup.n_datasets)
        .into_par_iter()
        .map(|d| {
            let seeds = SeedPath::new(setup.master_seed, d as u64);
            let rows = data
                .draw(seeds.data_seed())
                .and_then(|field| mc_ci(&field, settings, seeds))
                .map(|run| {
                    run.intervals
                        .iter()
                        .map(|iv| {
                            let truth = setup.truth.get(iv.parameter);
                            ScoredInterval {
                                interval: *iv,
                                true_value: truth,
                                hit: iv.contains(truth),
                                proxy: run.proxy(iv.parameter, settings.level).ok(),
                            }
                        })
                        .collect()
                });
            DatasetOutcome {
                index: d,
                seed: seeds.data_seed(),
                rows,
            }
        })
        .collect();
    Ok(CoverageExperiment {
        report: CoverageReport::tally(&ParamName::MONTE_CARLO, settings.level, &datasets),
        datasets,
    })
}

/// Settings of the composite-likelihood coverage experiment.
#[derive(Debug, Clone)]
pub struct ClSettings<T> {
    pub free: Vec<ClParam>,
    pub weights: PairWeightSpec,
    pub windows: WindowSpec,
    pub level: T,
    pub max_lag: usize,
    pub optimizer: NelderMead<T>,
}

impl<T: Real> ClSettings<T> {
    pub fn new(free: &[ClParam]) -> Self {
        Self {
            free: free.to_vec(),
            weights: PairWeightSpec::default(),
            windows: WindowSpec::default(),
            level: T::lit(0.95),
            max_lag: crate::mm::DEFAULT_MAX_LAG,
            optimizer: NelderMead::default(),
        }
    }
}

/// Starting point for the CL optimizer: the moments-matching fit.
pub fn cl_start<T: Real>(field: &FieldSample<T>, max_lag: usize) -> Result<ThetaCl<T>> {
    fit_mm(field, max_lag).map(ThetaCl::from)
}

/// Coverage of asymptotic-normal sandwich intervals. Fixed components are held
/// at the truth; the optimizer starts from the moments-matching fit.
pub fn cl_coverage_experiment<T: Real>(
    setup: &ExperimentSetup<T>,
    settings: &ClSettings<T>,
) -> Result<CoverageExperiment<T>> {
    setup.validate()?;
    check_level(settings.level)?;
    settings.windows.validate(&setup.lattice)?;
    let truth = ThetaCl::from(setup.truth);
    let scenario = EstimationScenario::new(&settings.free, truth)?;
    let data = ExactSampler::new(&setup.truth, &setup.lattice, setup.budget)?;
    let datasets: Vec<DatasetOutcome<T>> = (0..setup.n_datasets)
        .into_par_iter()
        .map(|d| {
            let seeds = SeedPath::new(setup.master_seed, d as u64);
            let rows = data.draw(seeds.data_seed()).and_then(|field| {
                let start = cl_start(&field, settings.max_lag)?;
                let res = sandwich_ci(
                    &field,
                    &settings.weights,
                    &settings.windows,
                    &scenario,
                    settings.level,
                    &start,
                    &settings.optimizer,
                )?;
                Ok(res
                    .intervals
                    .iter()
                    .map(|iv| {
                        let t = setup.truth.get(iv.parameter);
                        ScoredInterval {
                            interval: *iv,
                            true_value: t,
                            hit: iv.contains(t),
                            proxy: None,
                        }
                    })
                    .collect())
            });
            DatasetOutcome {
                index: d,
                seed: seeds.data_seed(),
                rows,
            }
        })
        .collect();
    let params = reported_parameters(scenario.free());
    Ok(CoverageExperiment {
        report: CoverageReport::tally(&params, settings.level, &datasets),
        datasets,
    })
}
