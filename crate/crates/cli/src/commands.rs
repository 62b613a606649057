use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use stou_core::bootstrap::{
    cl_coverage_experiment, cl_start, coverage_experiment, mc_ci, ClSettings, CoverageExperiment,
    ExactSampler, ExperimentSetup, McSettings,
};
use stou_core::cl::{maximize_cl, sandwich_ci, EstimationScenario, ThetaCl};
use stou_core::optim::NelderMead;
use stou_core::rng::{stream, SeedPath};
use stou_core::sim::GridSimulator;
use stou_core::{fit_mm, FieldSample64, IntervalEstimate, ParamName, StouParams64};

use crate::config::{CiMethod, CommandKind, ExperimentConfig, Method, SimMethod};
use crate::fieldio::{read_field, write_field};

const ALL_PARAMS: [ParamName; 7] = [
    ParamName::Lambda,
    ParamName::CTilde,
    ParamName::C,
    ParamName::MuSeed,
    ParamName::Tau,
    ParamName::Mu,
    ParamName::Sigma2,
];

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    match cfg.command {
        CommandKind::Simulate => simulate(cfg),
        CommandKind::FitMm => fit_mm_cmd(cfg),
        CommandKind::FitCl => fit_cl_cmd(cfg),
        CommandKind::Ci => ci_cmd(cfg),
        CommandKind::Coverage | CommandKind::Proxy => experiment(cfg),
    }
}

fn output(cfg: &ExperimentConfig) -> anyhow::Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_input(cfg: &ExperimentConfig) -> anyhow::Result<FieldSample64> {
    let path = cfg.input.as_ref().ok_or_else(|| anyhow!("no input field"))?;
    let dx = cfg.resolved.raw("dx").map_or(Ok(0.05), str::parse)?;
    let dt = cfg.resolved.raw("dt").map_or(Ok(0.05), str::parse)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_field(io::BufReader::new(file), dx, dt).with_context(|| format!("reading {}", path.display()))
}

fn simulate(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let truth = cfg.truth.expect("validated");
    let lattice = cfg.lattice.expect("validated");
    let seed = SeedPath::new(cfg.seed, 0).data_seed();
    let field = match cfg.method {
        Method::Sim(SimMethod::Grid) => {
            GridSimulator::new(&truth, &lattice, cfg.grid)?.simulate(&mut stream(seed))?
        }
        _ => ExactSampler::new(&truth, &lattice, cfg.budget)?.draw(seed)?,
    };
    let path = cfg.out.clone().unwrap_or_else(|| PathBuf::from("field.csv"));
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_field(BufWriter::new(file), &field)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_point_estimates(w: &mut dyn Write, p: &StouParams64) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["parameter", "estimate"])?;
    for name in ALL_PARAMS {
        out.write_record([name.as_str().to_string(), p.get(name).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn fit_mm_cmd(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let field = load_input(cfg)?;
    let fit = fit_mm(&field, cfg.max_lag)?;
    write_point_estimates(&mut *output(cfg)?, &fit)
}

/// Scenario whose fixed components come from the true parameters when given,
/// otherwise from the moments-matching start.
fn scenario_for(cfg: &ExperimentConfig, start: &ThetaCl<f64>) -> anyhow::Result<EstimationScenario<f64>> {
    let fixed = cfg.truth.map(ThetaCl::from).unwrap_or(*start);
    Ok(EstimationScenario::new(cfg.scenario.as_deref().unwrap_or_default(), fixed)?)
}

fn fit_cl_cmd(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let field = load_input(cfg)?;
    let start = cl_start(&field, cfg.max_lag)?;
    let scenario = scenario_for(cfg, &start)?;
    let fit = maximize_cl(&field, &cfg.weights, &scenario, &start, &NelderMead::default())?;
    write_point_estimates(&mut *output(cfg)?, &fit.theta.to_params()?)
}

fn write_intervals(w: &mut dyn Write, intervals: &[IntervalEstimate<f64>]) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["parameter", "estimate", "lower", "median", "upper", "level"])?;
    for iv in intervals {
        out.write_record([
            iv.parameter.as_str().to_string(),
            iv.point.to_string(),
            iv.lower.to_string(),
            iv.median.to_string(),
            iv.upper.to_string(),
            iv.level.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn mc_settings(cfg: &ExperimentConfig) -> McSettings<f64> {
    McSettings {
        replicates: cfg.replicates,
        level: cfg.level,
        simulator: cfg.bootstrap_simulator(),
        max_lag: cfg.max_lag,
    }
}

fn cl_settings(cfg: &ExperimentConfig) -> ClSettings<f64> {
    ClSettings {
        free: cfg.scenario.clone().unwrap_or_default(),
        weights: cfg.weights,
        windows: cfg.windows,
        level: cfg.level,
        max_lag: cfg.max_lag,
        optimizer: NelderMead::default(),
    }
}

fn ci_cmd(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let field = load_input(cfg)?;
    let intervals = match cfg.method {
        Method::Ci(CiMethod::ClSandwich) => {
            let start = cl_start(&field, cfg.max_lag)?;
            let scenario = scenario_for(cfg, &start)?;
            sandwich_ci(
                &field,
                &cfg.weights,
                &cfg.windows,
                &scenario,
                cfg.level,
                &start,
                &NelderMead::default(),
            )?
            .intervals
        }
        _ => {
            let run = mc_ci(&field, &mc_settings(cfg), SeedPath::new(cfg.seed, 0))?;
            if !run.dropped.is_empty() {
                log::warn!("{} bootstrap refits failed", run.dropped.len());
            }
            run.intervals
        }
    };
    write_intervals(&mut *output(cfg)?, &intervals)
}

fn csv_file(dir: &Path, name: &str) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

/// `dataset,seed,parameter,true_value,estimate,lower,upper,hit,status`.
fn write_estimates(dir: &Path, exp: &CoverageExperiment<f64>) -> anyhow::Result<()> {
    let mut out = csv_file(dir, "estimates.csv")?;
    out.write_record([
        "dataset", "seed", "parameter", "true_value", "estimate", "lower", "upper", "hit", "status",
    ])?;
    for d in &exp.datasets {
        let (idx, seed) = (d.index.to_string(), d.seed.to_string());
        match &d.rows {
            Ok(rows) => {
                for r in rows {
                    out.write_record([
                        idx.as_str(),
                        seed.as_str(),
                        r.interval.parameter.as_str(),
                        &r.true_value.to_string(),
                        &r.interval.point.to_string(),
                        &r.interval.lower.to_string(),
                        &r.interval.upper.to_string(),
                        if r.hit { "1" } else { "0" },
                        "ok",
                    ])?;
                }
            }
            Err(e) => {
                let status = format!("failed: {e}");
                out.write_record([idx.as_str(), seed.as_str(), "", "", "", "", "", "", &status])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn write_coverage(dir: &Path, exp: &CoverageExperiment<f64>) -> anyhow::Result<()> {
    let mut out = csv_file(dir, "coverage.csv")?;
    out.write_record(["parameter", "coverage", "se", "n"])?;
    for e in &exp.report.entries {
        out.write_record([
            e.parameter.as_str().to_string(),
            pct(e.rate()),
            pct(e.standard_error()),
            e.datasets.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Coverage-proxy table (mean over datasets) plus the per-dataset proxies.
fn write_proxies(dir: &Path, exp: &CoverageExperiment<f64>) -> anyhow::Result<()> {
    let mut table = csv_file(dir, "coverage.csv")?;
    table.write_record(["parameter", "coverage", "se", "n"])?;
    for e in &exp.report.entries {
        let (mean, se, n) = exp.mean_proxy(e.parameter).unwrap_or((f64::NAN, f64::NAN, 0));
        table.write_record([e.parameter.as_str().to_string(), pct(mean), pct(se), n.to_string()])?;
    }
    table.flush()?;
    let mut out = csv_file(dir, "proxies.csv")?;
    out.write_record(["dataset", "seed", "parameter", "theta_e", "proxy"])?;
    for d in &exp.datasets {
        let Ok(rows) = &d.rows else { continue };
        for r in rows {
            let Some(p) = r.proxy else { continue };
            out.write_record([
                d.index.to_string(),
                d.seed.to_string(),
                r.interval.parameter.as_str().to_string(),
                r.interval.point.to_string(),
                p.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn experiment(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let setup = ExperimentSetup {
        truth: cfg.truth.expect("validated"),
        lattice: cfg.lattice.expect("validated"),
        n_datasets: cfg.n_datasets,
        master_seed: cfg.seed,
        budget: cfg.budget,
    };
    let exp = match cfg.method {
        Method::Ci(CiMethod::ClSandwich) => cl_coverage_experiment(&setup, &cl_settings(cfg))?,
        _ => coverage_experiment(&setup, &mc_settings(cfg))?,
    };
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_estimates(&dir, &exp)?;
    if cfg.command == CommandKind::Proxy {
        write_proxies(&dir, &exp)?;
    } else {
        write_coverage(&dir, &exp)?;
    }
    if exp.report.failed > 0 {
        log::warn!("{} of {} datasets failed", exp.report.failed, cfg.n_datasets);
    }
    let since_epoch = started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = format!(
        "# stou {} run\n\
         # stou-cli {}, stou-core {}\n\
         # started at unix time {}, wall-clock {:.3} s, {} worker(s)\n\
         # dataset d is simulated from derive_seed(seed, d, 0); bootstrap replicate r\n\
         # of dataset d uses derive_seed(seed, d, r + 1) (SplitMix64 mixing, ChaCha8 streams)\n\
         # datasets failed: {}\n\
         {}",
        cfg.command.as_str(),
        env!("CARGO_PKG_VERSION"),
        stou_core::VERSION,
        since_epoch,
        clock.elapsed().as_secs_f64(),
        cfg.workers,
        exp.report.failed,
        cfg.to_config_text(),
    );
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}
