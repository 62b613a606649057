use crate::error::{Result, StouError};
use crate::interval::{normal_multiplier, IntervalEstimate};
use crate::linalg::Matrix;
use crate::model::{FieldSample, ParamName};
use crate::optim::NelderMead;
use crate::scalar::Real;

use super::objective::{hessian_h, pairwise_loglik, total_weight, wsev_j};
use super::{ClParam, EstimationScenario, PairWeightSpec, ThetaCl, WindowSpec};

/// Outcome of maximizing the pairwise log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ClFit<T> {
    pub theta: ThetaCl<T>,
    /// Objective at `theta`.
    pub objective: T,
    /// Objective at the pinned starting point.
    pub start_objective: T,
    pub iterations: usize,
    /// `false` when the optimizer ran out of iterations; `theta` is still the
    /// best point found.
    pub converged: bool,
}

fn to_search<T: Real>(p: ClParam, v: T) -> T {
    if p.is_positive() {
        v.ln()
    } else {
        v
    }
}

fn from_search<T: Real>(p: ClParam, v: T) -> T {
    if p.is_positive() {
        v.exp()
    } else {
        v
    }
}

/// Maximizes the pairwise log-likelihood over the scenario's free components,
/// searching positive components on the log scale.
pub fn maximize_cl<T: Real>(
    field: &FieldSample<T>,
    weights: &PairWeightSpec,
    scenario: &EstimationScenario<T>,
    start: &ThetaCl<T>,
    optimizer: &NelderMead<T>,
) -> Result<ClFit<T>> {
    let start = scenario.pin(start);
    let start_objective = pairwise_loglik(&start, field, weights)?;
    let free = scenario.free();
    let base = start.to_array();
    let assemble = |z: &[T]| -> [T; 4] {
        let mut v = base;
        for (p, &zi) in free.iter().zip(z) {
            v[p.index()] = from_search(*p, zi);
        }
        v
    };
    let objective = |z: &[T]| -> T {
        let v = assemble(z);
        match ThetaCl::from_array(v) {
            Ok(theta) => match pairwise_loglik(&theta, field, weights) {
                Ok(pl) => -pl,
                Err(_) => T::infinity(),
            },
            Err(_) => T::infinity(),
        }
    };
    let z0: Vec<T> = free.iter().map(|p| to_search(*p, base[p.index()])).collect();
    let mean_step = T::lit(0.5) * start.sigma2.sqrt();
    let steps: Vec<T> = free
        .iter()
        .map(|p| if p.is_positive() { T::lit(0.2) } else { mean_step })
        .collect();
    let min = optimizer.minimize(objective, &z0, &steps);
    let (theta, value) = if -min.value >= start_objective {
        (ThetaCl::from_array(assemble(&min.x))?, -min.value)
    } else {
        (start, start_objective)
    };
    if !min.converged {
        log::warn!(
            "composite-likelihood optimizer stopped after {} iterations without converging",
            min.iterations
        );
    }
    Ok(ClFit {
        theta,
        objective: value,
        start_objective,
        iterations: min.iterations,
        converged: min.converged,
    })
}

/// Sandwich variance of the CL estimator.
#[derive(Debug, Clone)]
pub struct SandwichResult<T> {
    pub theta_hat: ThetaCl<T>,
    /// `H(theta_hat)`, 4 × 4.
    pub h: Matrix<T>,
    /// `J*`, 4 × 4.
    pub j_star: Matrix<T>,
    /// `W H⁻¹ J* H⁻¹` restricted to the free components, in `free` order.
    pub g_inv: Matrix<T>,
    /// Total pair weight `W`.
    pub total_weight: usize,
    pub windows: usize,
    pub free: Vec<ClParam>,
    pub standard_errors: Vec<T>,
}

impl<T: Real> SandwichResult<T> {
    pub fn standard_error(&self, p: ClParam) -> Option<T> {
        self.free
            .iter()
            .position(|&q| q == p)
            .map(|i| self.standard_errors[i])
    }
}

/// Asymptotic-normal intervals from one CL fit.
#[derive(Debug, Clone)]
pub struct ClIntervals<T> {
    pub fit: ClFit<T>,
    pub sandwich: SandwichResult<T>,
    /// Free components first (vector order), then derived `c`, `mu_seed`, `tau`
    /// when they depend on at least one free component.
    pub intervals: Vec<IntervalEstimate<T>>,
}

impl<T: Real> ClIntervals<T> {
    pub fn interval(&self, p: ParamName) -> Option<&IntervalEstimate<T>> {
        self.intervals.iter().find(|iv| iv.parameter == p)
    }
}

/// Value and gradient in `theta` of the derived parameters.
fn derived_with_gradient<T: Real>(theta: &ThetaCl<T>) -> Vec<(ParamName, T, [T; 4])> {
    let ThetaCl {
        lambda,
        c_tilde,
        sigma2,
        mu,
    } = *theta;
    let half = T::lit(0.5);
    let zero = T::zero();
    let c = lambda / c_tilde;
    let tau = (T::lit(2.0) * lambda * c_tilde * sigma2).sqrt();
    let mu_seed = half * lambda * c_tilde * mu;
    vec![
        (
            ParamName::C,
            c,
            [T::one() / c_tilde, -lambda / (c_tilde * c_tilde), zero, zero],
        ),
        (
            ParamName::MuSeed,
            mu_seed,
            [half * c_tilde * mu, half * lambda * mu, zero, half * lambda * c_tilde],
        ),
        (
            ParamName::Tau,
            tau,
            [
                half * tau / lambda,
                half * tau / c_tilde,
                half * tau / sigma2,
                zero,
            ],
        ),
    ]
}

/// Parameters [`sandwich_ci`] reports for a free set, in table order:
/// `lambda, c_tilde, c, mu_seed, tau, mu, sigma2`.
pub fn reported_parameters(free: &[ClParam]) -> Vec<ParamName> {
    let has = |p| free.contains(&p);
    let corr = has(ClParam::Lambda) || has(ClParam::CTilde);
    let mut out = Vec::new();
    if has(ClParam::Lambda) {
        out.push(ParamName::Lambda);
    }
    if has(ClParam::CTilde) {
        out.push(ParamName::CTilde);
    }
    if corr {
        out.push(ParamName::C);
    }
    if corr || has(ClParam::Mu) {
        out.push(ParamName::MuSeed);
    }
    if corr || has(ClParam::Sigma2) {
        out.push(ParamName::Tau);
    }
    if has(ClParam::Mu) {
        out.push(ParamName::Mu);
    }
    if has(ClParam::Sigma2) {
        out.push(ParamName::Sigma2);
    }
    out
}

/// CL fit followed by sandwich standard errors and `estimate ± z se` intervals,
/// with Delta-method intervals for `c`, `mu_seed` and `tau`.
pub fn sandwich_ci<T: Real>(
    field: &FieldSample<T>,
    weights: &PairWeightSpec,
    windows: &WindowSpec,
    scenario: &EstimationScenario<T>,
    level: T,
    start: &ThetaCl<T>,
    optimizer: &NelderMead<T>,
) -> Result<ClIntervals<T>> {
    if scenario.free().is_empty() {
        return Err(StouError::InvalidSpec(
            "interval construction needs at least one free parameter".into(),
        ));
    }
    let z = normal_multiplier(level)?;
    let lattice = field.lattice();
    windows.validate(lattice)?;
    let fit = maximize_cl(field, weights, scenario, start, optimizer)?;
    let theta_hat = fit.theta;
    let h = hessian_h(&theta_hat, lattice, weights)?;
    let wsev = wsev_j(&theta_hat, field, weights, windows)?;
    let w = total_weight(lattice, weights);

    let free = scenario.free().to_vec();
    let idx: Vec<usize> = free.iter().map(|p| p.index()).collect();
    let h_free = h.principal(&idx);
    let condition = h_free.condition_number();
    if !(condition <= T::lit(1e12)) {
        return Err(StouError::SingularH {
            condition: condition.as_f64(),
        });
    }
    let h_inv = h_free.inverse().ok_or(StouError::SingularH {
        condition: f64::INFINITY,
    })?;
    let j_free = wsev.j_star.principal(&idx);
    let g_inv = h_inv
        .matmul(&j_free)
        .matmul(&h_inv)
        .scale(T::of_usize(w));
    let standard_errors: Vec<T> = g_inv
        .diagonal()
        .into_iter()
        .map(|v| v.max(T::zero()).sqrt())
        .collect();

    let mut intervals = Vec::new();
    for (p, &se) in free.iter().zip(&standard_errors) {
        let v = theta_hat.get(*p);
        intervals.push(IntervalEstimate {
            parameter: p.name(),
            point: v,
            lower: v - z * se,
            median: v,
            upper: v + z * se,
            level,
        });
    }
    for (name, value, grad) in derived_with_gradient(&theta_hat) {
        let g: Vec<T> = idx.iter().map(|&i| grad[i]).collect();
        if g.iter().all(|&gi| gi == T::zero()) {
            continue;
        }
        let var = crate::scalar::dot(&g, &g_inv.mul_vec(&g));
        let se = var.max(T::zero()).sqrt();
        intervals.push(IntervalEstimate {
            parameter: name,
            point: value,
            lower: value - z * se,
            median: value,
            upper: value + z * se,
            level,
        });
    }

    Ok(ClIntervals {
        fit,
        sandwich: SandwichResult {
            theta_hat,
            h,
            j_star: wsev.j_star,
            g_inv,
            total_weight: w,
            windows: wsev.windows,
            free,
            standard_errors,
        },
        intervals,
    })
}
