//! Approximate simulation by discretizing the ambit-set integral.
//!
//! The field value at `(t, x)` is the integral of `exp(-lambda (t - s))` against
//! a Gaussian Lévy basis over the cone `{(xi, s): s <= t, |xi - x| <= c (t - s)}`,
//! truncated at depth `t - s <= p * dt`. The space-time plane is cut into
//! axis-aligned cells of size `(dx / k) × (dt / k)` aligned with the lattice,
//! one Lévy increment is drawn per cell, and every observation point sums the
//! increments of the cells its cone touches. A cell partially inside a cone
//! contributes with its exact intersected area `A`: the increment is
//! `mu_seed * A + tau * sqrt(A) * z` with `z` the cell's shared standard normal.
//! The kernel is evaluated at the temporal midpoint of each cell row.
//!
//! Because cells are aligned with the lattice, every observation point sees the
//! same cone footprint up to a shift, so the footprint is tabulated once and
//! full-cell runs are summed with per-row prefix sums.

use rayon::prelude::*;

use crate::error::{Result, StouError};
use crate::model::{FieldSample, Lattice, StouParams};
use crate::rng::fill_standard_normal;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSimConfig {
    /// Number of observation time steps the kernel is kept for.
    pub truncation_p: usize,
    /// Integration cells per observation cell along each axis.
    pub cells_per_obs_cell: usize,
}

impl Default for GridSimConfig {
    fn default() -> Self {
        Self {
            truncation_p: 300,
            cells_per_obs_cell: 1,
        }
    }
}

impl GridSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.truncation_p == 0 {
            return Err(StouError::InvalidSpec("truncation_p must be >= 1".into()));
        }
        if self.cells_per_obs_cell == 0 {
            return Err(StouError::InvalidSpec(
                "cells_per_obs_cell must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Kernel support in time units, `p * dt`.
    pub fn truncation_depth<T: Real>(&self, dt: T) -> T {
        T::of_usize(self.truncation_p) * dt
    }

    /// `true` when the kernel weight at the truncation depth, `exp(-lambda p dt)`,
    /// exceeds `1e-2`.
    pub fn is_too_shallow<T: Real>(&self, lambda: T, dt: T) -> bool {
        (-lambda * self.truncation_depth(dt)).exp() > T::lit(1e-2)
    }
}

/// Length of `[a, b] ∩ [-c u, c u]`.
fn cover<T: Real>(a: T, b: T, c: T, u: T) -> T {
    let w = c * u;
    (b.min(w) - a.max(-w)).max(T::zero())
}

/// Area of `[a, b] × [u0, u1]` inside `{|xi| <= c u}` (exact; the covered
/// length is piecewise linear in `u` with kinks at `|a| / c` and `|b| / c`).
pub(crate) fn cell_cone_area<T: Real>(a: T, b: T, u0: T, u1: T, c: T) -> T {
    let mut knots = vec![u0, u1];
    for k in [a.abs() / c, b.abs() / c] {
        if k > u0 && k < u1 {
            knots.push(k);
        }
    }
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let half = T::lit(0.5);
    knots
        .windows(2)
        .map(|w| half * (w[1] - w[0]) * (cover(a, b, c, w[0]) + cover(a, b, c, w[1])))
        .sum()
}

#[derive(Debug, Clone)]
struct LagRow<T> {
    kernel: T,
    /// Inclusive offset range of fully covered cells, if any.
    full: Option<(isize, isize)>,
    partial: Vec<(isize, T)>,
    area: T,
}

/// Pre-tabulated cone footprint for one `(params, lattice, config)` triple.
#[derive(Debug, Clone)]
pub struct GridSimulator<T> {
    lattice: Lattice<T>,
    tau: T,
    k: usize,
    rows: Vec<LagRow<T>>,
    /// Largest absolute cell offset in the footprint.
    reach: isize,
    full_weight: T,
    mean_level: T,
}

impl<T: Real> GridSimulator<T> {
    pub fn new(params: &StouParams<T>, lattice: &Lattice<T>, cfg: GridSimConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.is_too_shallow(params.lambda(), lattice.dt()) {
            log::warn!(
                "kernel truncation too shallow: exp(-lambda p dt) = {} > 1e-2 (lambda={}, p={}, dt={})",
                (-params.lambda() * cfg.truncation_depth(lattice.dt())).exp(),
                params.lambda(),
                cfg.truncation_p,
                lattice.dt()
            );
        }
        let k = cfg.cells_per_obs_cell;
        let hx = lattice.dx() / T::of_usize(k);
        let ht = lattice.dt() / T::of_usize(k);
        let c = params.c();
        let lambda = params.lambda();
        let n_rows = cfg.truncation_p * k;
        let half = T::lit(0.5);

        let mut rows = Vec::with_capacity(n_rows);
        let mut reach = 0isize;
        for j in 0..n_rows {
            let u0 = T::of_usize(j) * ht;
            let u1 = T::of_usize(j + 1) * ht;
            let kernel = (-lambda * (u0 + half * ht)).exp();
            let w1 = c * u1 / hx;
            let lo = -(w1.ceil().to_isize().expect("cone reach fits in isize")) - 1;
            let hi = -lo;
            let mut full: Option<(isize, isize)> = None;
            let mut partial = Vec::new();
            let mut area = T::zero();
            for o in lo..=hi {
                let a = T::lit(o as f64) * hx;
                let b = T::lit((o + 1) as f64) * hx;
                if a.abs().max(b.abs()) <= c * u0 {
                    full = Some(match full {
                        None => (o, o),
                        Some((f0, _)) => (f0, o),
                    });
                    area = area + hx * ht;
                    reach = reach.max(o.abs()).max((o + 1).abs());
                    continue;
                }
                let cell_area = cell_cone_area(a, b, u0, u1, c);
                if cell_area > T::zero() {
                    partial.push((o, cell_area));
                    area = area + cell_area;
                    reach = reach.max(o.abs()).max((o + 1).abs());
                }
            }
            rows.push(LagRow {
                kernel,
                full,
                partial,
                area,
            });
        }
        let mean_level = params.mu_seed()
            * rows
                .iter()
                .map(|r| r.kernel * r.area)
                .sum::<T>();
        Ok(Self {
            lattice: *lattice,
            tau: params.tau(),
            k,
            rows,
            reach,
            full_weight: (hx * ht).sqrt(),
            mean_level,
        })
    }

    /// Deterministic component of every simulated value,
    /// `mu_seed * sum_rows kernel(row) * area(row)`.
    pub fn mean_level(&self) -> T {
        self.mean_level
    }

    /// Noise-free variance implied by the discretization,
    /// `tau2 * sum_rows kernel(row)^2 * area(row)`.
    pub fn variance_level(&self) -> T {
        self.tau
            * self.tau
            * self
                .rows
                .iter()
                .map(|r| r.kernel * r.kernel * r.area)
                .sum::<T>()
    }

    pub fn simulate<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<FieldSample<T>> {
        let lattice = &self.lattice;
        let (nx, nt, k) = (lattice.n_x(), lattice.n_t(), self.k);
        let depth = self.rows.len();
        let n_store_rows = (nt - 1) * k + depth;
        let n_cols = (nx - 1) * k + 2 * self.reach as usize + 1;

        let mut z = vec![T::zero(); n_store_rows * n_cols];
        fill_standard_normal(rng, &mut z);
        let mut prefix = vec![T::zero(); n_store_rows * (n_cols + 1)];
        for (zr, pr) in z.chunks(n_cols).zip(prefix.chunks_mut(n_cols + 1)) {
            let mut acc = T::zero();
            for (q, &v) in zr.iter().enumerate() {
                acc = acc + v;
                pr[q + 1] = acc;
            }
        }

        let reach = self.reach;
        let mut values = vec![T::zero(); lattice.len()];
        values
            .par_chunks_mut(nx)
            .enumerate()
            .for_each(|(i, out)| {
                for (m, v) in out.iter_mut().enumerate() {
                    let base = (m * k) as isize + reach;
                    let mut noise = T::zero();
                    for (j, row) in self.rows.iter().enumerate() {
                        let r = i * k + depth - j - 1;
                        let zr = &z[r * n_cols..(r + 1) * n_cols];
                        let pr = &prefix[r * (n_cols + 1)..(r + 1) * (n_cols + 1)];
                        let mut s = T::zero();
                        if let Some((o0, o1)) = row.full {
                            let q0 = (base + o0) as usize;
                            let q1 = (base + o1) as usize;
                            s = self.full_weight * (pr[q1 + 1] - pr[q0]);
                        }
                        for &(o, a) in &row.partial {
                            s = s + a.sqrt() * zr[(base + o) as usize];
                        }
                        noise = noise + row.kernel * s;
                    }
                    *v = self.mean_level + self.tau * noise;
                }
            });
        FieldSample::new(*lattice, values)
    }
}

/// One grid simulation of the field; see [`GridSimulator`] for repeated draws.
pub fn simulate_grid<T: Real, R: rand::Rng + ?Sized>(
    params: &StouParams<T>,
    lattice: &Lattice<T>,
    cfg: GridSimConfig,
    rng: &mut R,
) -> Result<FieldSample<T>> {
    GridSimulator::new(params, lattice, cfg)?.simulate(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    /// Composite Simpson rule.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn cell_area_matches_quadrature() {
        let cases = [
            (0.0, 0.05, 0.0, 0.05, 1.0),
            (-0.05, 0.0, 0.05, 0.1, 1.0),
            (0.02, 0.09, 0.0, 0.05, 2.3),
            (-0.3, 0.1, 0.1, 0.2, 0.7),
            (0.5, 0.6, 0.0, 0.1, 1.0),
        ];
        for (a, b, u0, u1, c) in cases {
            let want = simpson(|u| cover(a, b, c, u), u0, u1, 20_000);
            assert!((cell_cone_area(a, b, u0, u1, c) - want).abs() < 1e-9, "{a} {b} {u0} {u1} {c}");
        }
    }

    #[test]
    fn row_areas_tile_the_cone() {
        let p = StouParams::from_natural(1.0, 1.7, 0.2, 0.01).unwrap();
        let l = Lattice::square(3, 0.05).unwrap();
        for k in [1, 2, 3] {
            let g = GridSimulator::new(&p, &l, GridSimConfig { truncation_p: 20, cells_per_obs_cell: k })
                .unwrap();
            let ht = 0.05 / k as f64;
            for (j, row) in g.rows.iter().enumerate() {
                let want = p.c() * ht * ht * (2 * j + 1) as f64;
                assert_relative_eq!(row.area, want, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_field_matches_integral_oracle() {
        let p = StouParams::from_natural(1.0, 1.0, 0.2, 1e-30).unwrap();
        let l = Lattice::square(4, 0.05).unwrap();
        let cfg = GridSimConfig { truncation_p: 300, cells_per_obs_cell: 1 };
        let depth = cfg.truncation_depth(0.05);
        assert_relative_eq!(depth, 15.0, max_relative = 1e-12);
        let oracle = 0.2 * simpson(|u| (-u).exp() * 2.0 * u, 0.0, depth, 200_000);
        let f = simulate_grid(&p, &l, cfg, &mut stream(3)).unwrap();
        let bound = (-depth).exp() * 0.4 + 1e-3;
        for &v in f.values() {
            assert!((v - oracle).abs() < 1e-3, "{v} vs {oracle}");
            assert!((v - 0.4).abs() <= bound);
        }
    }

    #[test]
    fn doubling_truncation_moves_mean_by_tail_mass() {
        let p = StouParams::from_natural(1.0, 1.0, 0.2, 0.01).unwrap();
        let l = Lattice::square(2, 0.05).unwrap();
        for pp in [20usize, 60, 100] {
            let a = GridSimulator::new(&p, &l, GridSimConfig { truncation_p: pp, cells_per_obs_cell: 1 })
                .unwrap();
            let b = GridSimulator::new(&p, &l, GridSimConfig { truncation_p: 2 * pp, cells_per_obs_cell: 1 })
                .unwrap();
            let depth = pp as f64 * 0.05;
            // exact tail of the truncated mean integral: (1 + lambda T) e^{-lambda T} mu
            let tail = (1.0 + depth) * (-depth).exp() * p.mu();
            assert!((b.mean_level() - a.mean_level()).abs() <= tail * 1.001 + 1e-12);
        }
    }

    #[test]
    fn discretized_variance_is_close_to_stationary_variance() {
        let p = StouParams::from_natural(1.0, 1.0, 0.2, 0.01).unwrap();
        let l = Lattice::square(2, 0.05).unwrap();
        let g = GridSimulator::new(&p, &l, GridSimConfig { truncation_p: 300, cells_per_obs_cell: 1 })
            .unwrap();
        assert_relative_eq!(g.variance_level(), 0.005, max_relative = 1e-3);
        assert_relative_eq!(g.mean_level(), 0.4, max_relative = 1e-3);
    }

    #[test]
    fn deterministic_given_stream() {
        let p = StouParams::from_natural(2.0, 1.0, 0.2, 0.01).unwrap();
        let l = Lattice::new(5, 4, 0.05, 0.05).unwrap();
        let cfg = GridSimConfig { truncation_p: 60, cells_per_obs_cell: 2 };
        let a = simulate_grid(&p, &l, cfg, &mut stream(1)).unwrap();
        let b = simulate_grid(&p, &l, cfg, &mut stream(1)).unwrap();
        let c = simulate_grid(&p, &l, cfg, &mut stream(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_config_rejected() {
        let p = StouParams::from_natural(1.0, 1.0, 0.2, 0.01).unwrap();
        let l = Lattice::square(2, 0.05).unwrap();
        assert!(GridSimulator::new(&p, &l, GridSimConfig { truncation_p: 0, cells_per_obs_cell: 1 }).is_err());
        assert!(GridSimulator::new(&p, &l, GridSimConfig { truncation_p: 5, cells_per_obs_cell: 0 }).is_err());
        assert!(GridSimConfig { truncation_p: 10, cells_per_obs_cell: 1 }.is_too_shallow(1.0, 0.05));
        assert!(!GridSimConfig { truncation_p: 300, cells_per_obs_cell: 1 }.is_too_shallow(1.0, 0.05));
    }
}
