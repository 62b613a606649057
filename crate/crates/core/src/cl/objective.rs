use crate::error::{Result, StouError};
use crate::linalg::Matrix;
use crate::mm::Axis;
use crate::model::{FieldSample, Lattice};
use crate::scalar::Real;

use super::pair::{expected_information, l_pair, score_u};
use super::{PairWeightSpec, ThetaCl, WindowSpec};

/// Pairs `steps` grid points apart along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagClass {
    pub axis: Axis,
    pub steps: usize,
}

/// An admissible pair of lattice points (flat indices, `a < b`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisPair {
    pub a: usize,
    pub b: usize,
    pub class: LagClass,
}

/// Lag classes in summation order: temporal lags `1..=d`, then spatial.
fn lag_classes<T: Real>(lattice: &Lattice<T>, weights: &PairWeightSpec) -> Vec<LagClass> {
    let d = weights.cutoff_d();
    let temporal = (1..=d.min(lattice.n_t() - 1)).map(|steps| LagClass {
        axis: Axis::Temporal,
        steps,
    });
    let spatial = (1..=d.min(lattice.n_x() - 1)).map(|steps| LagClass {
        axis: Axis::Spatial,
        steps,
    });
    temporal.chain(spatial).collect()
}

/// Number of pairs in `class` lying inside an `nt × nx` block.
fn class_count(class: LagClass, nt: usize, nx: usize) -> usize {
    match class.axis {
        Axis::Temporal => nt.saturating_sub(class.steps) * nx,
        Axis::Spatial => nt * nx.saturating_sub(class.steps),
    }
}

/// Calls `f(a, b)` for every pair of `class` whose endpoints both lie in the
/// block `[t0, t0 + nt) × [x0, x0 + nx)`, time-major by first endpoint.
fn for_each_pair_in<T: Real>(
    lattice: &Lattice<T>,
    class: LagClass,
    (t0, x0, nt, nx): (usize, usize, usize, usize),
    mut f: impl FnMut(usize, usize),
) {
    let (dt, dx) = match class.axis {
        Axis::Temporal => (class.steps, 0),
        Axis::Spatial => (0, class.steps),
    };
    if nt <= dt || nx <= dx {
        return;
    }
    for t in t0..t0 + nt - dt {
        for x in x0..x0 + nx - dx {
            f(lattice.index(t, x), lattice.index(t + dt, x + dx));
        }
    }
}

/// All admissible pairs on `lattice`, in the fixed summation order.
pub fn admissible_pairs<T: Real>(lattice: &Lattice<T>, weights: &PairWeightSpec) -> Vec<AxisPair> {
    let mut out = Vec::new();
    for class in lag_classes(lattice, weights) {
        for_each_pair_in(
            lattice,
            class,
            (0, 0, lattice.n_t(), lattice.n_x()),
            |a, b| out.push(AxisPair { a, b, class }),
        );
    }
    out
}

/// `W`, the total pair weight on the lattice.
pub fn total_weight<T: Real>(lattice: &Lattice<T>, weights: &PairWeightSpec) -> usize {
    lag_classes(lattice, weights)
        .into_iter()
        .map(|c| class_count(c, lattice.n_t(), lattice.n_x()))
        .sum()
}

/// Weighted pairwise log-likelihood `sum_{i<j} w_ij l_ij(theta)`.
pub fn pairwise_loglik<T: Real>(
    theta: &ThetaCl<T>,
    field: &FieldSample<T>,
    weights: &PairWeightSpec,
) -> Result<T> {
    let lattice = field.lattice();
    let y = field.values();
    let two = T::lit(2.0);
    let log_s2 = theta.sigma2.ln();
    let mut total = T::zero();
    for class in lag_classes(lattice, weights) {
        let (rho, _) = theta.rho(class, lattice);
        // validates rho once per class
        l_pair(theta, theta.mu, theta.mu, rho)?;
        let one_m = T::one() - rho * rho;
        let constant = two * log_s2 + one_m.ln();
        let inv = T::one() / (theta.sigma2 * one_m);
        let mut quad = T::zero();
        let mut count = 0usize;
        for_each_pair_in(
            lattice,
            class,
            (0, 0, lattice.n_t(), lattice.n_x()),
            |i, j| {
                let a = y[i] - theta.mu;
                let b = y[j] - theta.mu;
                quad = quad + (a * a + b * b - two * rho * a * b);
                count += 1;
            },
        );
        total = total - T::lit(0.5) * (T::of_usize(count) * constant + quad * inv);
    }
    Ok(total)
}

/// `H(theta) = -E[∇² pl(theta)]` summed over admissible pairs (4 × 4).
pub fn hessian_h<T: Real>(
    theta: &ThetaCl<T>,
    lattice: &Lattice<T>,
    weights: &PairWeightSpec,
) -> Result<Matrix<T>> {
    let mut h = Matrix::zeros(4, 4);
    for class in lag_classes(lattice, weights) {
        let (rho, grad) = theta.rho(class, lattice);
        let block = expected_information(theta, rho, grad)?;
        let n = T::of_usize(class_count(class, lattice.n_t(), lattice.n_x()));
        for (i, row) in block.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                h[(i, j)] = h[(i, j)] + n * v;
            }
        }
    }
    Ok(h)
}

/// Window-subsampling estimate of the score variability.
#[derive(Debug, Clone)]
pub struct Wsev<T> {
    /// `J*`, 4 × 4.
    pub j_star: Matrix<T>,
    /// Number of windows `m` that contained at least one pair.
    pub windows: usize,
}

/// `J* = (1/m) sum_k (1/W_k) (sum_{S_k} w U)(sum_{S_k} w U)ᵀ` over sliding
/// windows; a pair belongs to a window when both endpoints do.
pub fn wsev_j<T: Real>(
    theta_hat: &ThetaCl<T>,
    field: &FieldSample<T>,
    weights: &PairWeightSpec,
    windows: &WindowSpec,
) -> Result<Wsev<T>> {
    let lattice = field.lattice();
    windows.validate(lattice)?;
    let y = field.values();
    let n = lattice.len();
    let classes = lag_classes(lattice, weights);

    // score of every admissible pair, indexed by class and first endpoint
    let mut scores: Vec<Vec<[T; 4]>> = Vec::with_capacity(classes.len());
    for &class in &classes {
        let (rho, grad) = theta_hat.rho(class, lattice);
        let mut u = vec![[T::zero(); 4]; n];
        let mut err = None;
        for_each_pair_in(
            lattice,
            class,
            (0, 0, lattice.n_t(), lattice.n_x()),
            |i, j| match score_u(theta_hat, y[i], y[j], rho, grad) {
                Ok(s) => u[i] = s,
                Err(e) => err = Some(e),
            },
        );
        if let Some(e) = err {
            return Err(e);
        }
        scores.push(u);
    }

    let mut j_star = Matrix::zeros(4, 4);
    let mut used = 0usize;
    for (t0, x0) in windows.corners(lattice) {
        let block = (t0, x0, windows.window_nt, windows.window_nx);
        let mut sum = [T::zero(); 4];
        let mut w = 0usize;
        for (class, u) in classes.iter().zip(&scores) {
            for_each_pair_in(lattice, *class, block, |i, _| {
                for (s, &v) in sum.iter_mut().zip(&u[i]) {
                    *s = *s + v;
                }
                w += 1;
            });
        }
        if w == 0 {
            continue;
        }
        j_star.add_outer(&sum, T::one() / T::of_usize(w));
        used += 1;
    }
    if used == 0 {
        return Err(StouError::NoValidWindows);
    }
    Ok(Wsev {
        j_star: j_star.scale(T::one() / T::of_usize(used)),
        windows: used,
    })
}
