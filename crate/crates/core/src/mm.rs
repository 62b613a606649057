//! Moments-matching estimation of `(lambda, c, mu_seed, tau2)` from one field.
//!
//! The decay rates come from no-intercept least-squares fits of
//! `-log acf(h)` against the physical lag on each axis; the field mean and
//! variance are matched directly and the seed moments recovered by inverting
//! `sigma2 = c tau2 / (2 lambda^2)` and `mu = 2 c mu_seed / lambda^2`.

use crate::error::{Result, StouError};
use crate::model::{FieldSample, StouParams};
use crate::scalar::Real;

pub const DEFAULT_MAX_LAG: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Temporal,
    Spatial,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Temporal => "temporal",
            Axis::Spatial => "spatial",
        }
    }
}

/// Empirical autocorrelations along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfEstimate<T> {
    pub axis: Axis,
    pub lags: Vec<usize>,
    pub values: Vec<T>,
}

fn degenerate<T: Real>(mean: T, var: T) -> bool {
    let floor = T::epsilon() * T::lit(16.0) * mean.abs();
    !(var > floor * floor) || var == T::zero()
}

/// Lag-`h` autocorrelation
/// `sum (Y_a - mean)(Y_b - mean) / (n_pairs * var)` over pairs `h` steps apart
/// along `axis`, with the full-sample mean and `1/n` variance.
pub fn empirical_acf<T: Real>(
    field: &FieldSample<T>,
    axis: Axis,
    max_lag: usize,
) -> Result<AcfEstimate<T>> {
    let lattice = field.lattice();
    let (nx, nt) = (lattice.n_x(), lattice.n_t());
    let extent = match axis {
        Axis::Temporal => nt,
        Axis::Spatial => nx,
    };
    if max_lag == 0 || max_lag >= extent {
        return Err(StouError::InvalidSpec(format!(
            "max_lag must be in 1..{extent} for the {} axis, got {max_lag}",
            axis.as_str()
        )));
    }
    let mean = field.mean();
    let var = field.variance();
    if degenerate(mean, var) {
        return Err(StouError::DegenerateSample);
    }
    let dev: Vec<T> = field.values().iter().map(|&v| v - mean).collect();
    let mut values = Vec::with_capacity(max_lag);
    for h in 1..=max_lag {
        let (sum, pairs) = match axis {
            Axis::Temporal => {
                let s: T = (0..nt - h)
                    .map(|t| {
                        let a = &dev[t * nx..(t + 1) * nx];
                        let b = &dev[(t + h) * nx..(t + h + 1) * nx];
                        crate::scalar::dot(a, b)
                    })
                    .sum();
                (s, (nt - h) * nx)
            }
            Axis::Spatial => {
                let s: T = (0..nt)
                    .map(|t| {
                        let row = &dev[t * nx..(t + 1) * nx];
                        crate::scalar::dot(&row[..nx - h], &row[h..])
                    })
                    .sum();
                (s, nt * (nx - h))
            }
        };
        let r = sum / (T::of_usize(pairs) * var);
        values.push(r.max(-T::one()).min(T::one()));
    }
    Ok(AcfEstimate {
        axis,
        lags: (1..=max_lag).collect(),
        values,
    })
}

/// Slope of the no-intercept regression of `-log acf` on `lag * spacing`,
/// using only lags whose autocorrelation lies in `(0, 1)`.
pub fn decay_rate<T: Real>(acf: &AcfEstimate<T>, spacing: T) -> Result<T> {
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    let mut used = 0;
    for (&h, &r) in acf.lags.iter().zip(&acf.values) {
        if r > T::zero() && r < T::one() {
            let x = T::of_usize(h) * spacing;
            sxy = sxy + x * (-r.ln());
            sxx = sxx + x * x;
            used += 1;
        }
    }
    if used == 0 {
        return Err(StouError::InsufficientUsableLags {
            axis: acf.axis.as_str(),
        });
    }
    Ok(sxy / sxx)
}

/// Inverts the moment relations given axis autocorrelations and the field's
/// mean and variance.
pub fn fit_mm_from_moments<T: Real>(
    temporal: &AcfEstimate<T>,
    spatial: &AcfEstimate<T>,
    dt: T,
    dx: T,
    mean: T,
    variance: T,
) -> Result<StouParams<T>> {
    let lambda = decay_rate(temporal, dt)?;
    let c_tilde = decay_rate(spatial, dx)?;
    StouParams::from_derived(lambda, c_tilde, variance, mean)
}

/// Moments-matching fit of one field. `max_lag` is capped at one less than
/// the extent of each axis.
pub fn fit_mm<T: Real>(field: &FieldSample<T>, max_lag: usize) -> Result<StouParams<T>> {
    let lattice = field.lattice();
    if lattice.n_x() < 2 || lattice.n_t() < 2 {
        return Err(StouError::InvalidField(
            "moments matching needs at least two points on each axis".into(),
        ));
    }
    let temporal = empirical_acf(field, Axis::Temporal, max_lag.min(lattice.n_t() - 1))?;
    let spatial = empirical_acf(field, Axis::Spatial, max_lag.min(lattice.n_x() - 1))?;
    fit_mm_from_moments(
        &temporal,
        &spatial,
        lattice.dt(),
        lattice.dx(),
        field.mean(),
        field.variance(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Lattice;
    use approx::assert_relative_eq;

    fn field(nx: usize, nt: usize, f: impl Fn(usize, usize) -> f64) -> FieldSample<f64> {
        let l = Lattice::new(nx, nt, 0.05, 0.05).unwrap();
        let v = (0..nt).flat_map(|t| (0..nx).map(move |x| (t, x))).map(|(t, x)| f(t, x)).collect();
        FieldSample::new(l, v).unwrap()
    }

    #[test]
    fn persistent_in_time_gives_unit_temporal_acf() {
        let f = field(7, 6, |_, x| (x as f64 * 1.3).sin());
        let acf = empirical_acf(&f, Axis::Temporal, 4).unwrap();
        for v in acf.values {
            assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_spike_has_small_acf() {
        let f = field(20, 20, |t, x| if (t, x) == (10, 10) { 1.4 } else { 0.4 });
        for axis in [Axis::Temporal, Axis::Spatial] {
            let acf = empirical_acf(&f, axis, 3).unwrap();
            assert!(acf.values.iter().all(|v| v.abs() < 0.01), "{acf:?}");
        }
    }

    #[test]
    fn constant_field_is_degenerate() {
        let f = field(5, 5, |_, _| 0.4);
        assert_eq!(empirical_acf(&f, Axis::Spatial, 2), Err(StouError::DegenerateSample));
        assert_eq!(fit_mm(&f, 2), Err(StouError::DegenerateSample));
    }

    #[test]
    fn lag_range_checked() {
        let f = field(5, 4, |t, x| (t * 3 + x) as f64);
        assert!(empirical_acf(&f, Axis::Temporal, 4).is_err());
        assert!(empirical_acf(&f, Axis::Temporal, 0).is_err());
        assert!(empirical_acf(&f, Axis::Spatial, 4).is_ok());
    }

    #[test]
    fn population_moments_are_inverted_exactly() {
        let (dt, dx) = (0.05, 0.05);
        let t = AcfEstimate {
            axis: Axis::Temporal,
            lags: (1..=5).collect(),
            values: (1..=5).map(|h| (-1.0 * h as f64 * dt).exp()).collect(),
        };
        let s = AcfEstimate {
            axis: Axis::Spatial,
            lags: (1..=5).collect(),
            values: (1..=5).map(|h| (-1.0 * h as f64 * dx).exp()).collect(),
        };
        let p = fit_mm_from_moments(&t, &s, dt, dx, 0.4, 0.005).unwrap();
        assert_relative_eq!(p.lambda(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(p.c(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(p.mu_seed(), 0.2, max_relative = 1e-10);
        assert_relative_eq!(p.tau2(), 0.01, max_relative = 1e-10);
    }

    #[test]
    fn negative_acf_is_unusable() {
        let t = AcfEstimate { axis: Axis::Temporal, lags: vec![1, 2], values: vec![-0.2, -0.1] };
        assert_eq!(
            decay_rate(&t, 0.05),
            Err(StouError::InsufficientUsableLags { axis: "temporal" })
        );
        // lags outside (0, 1) are dropped, the rest still fit
        let t = AcfEstimate { axis: Axis::Temporal, lags: vec![1, 2], values: vec![(-0.1f64).exp(), -0.1] };
        assert_relative_eq!(decay_rate(&t, 0.05).unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn alternating_field_fails_to_fit() {
        let f = field(6, 6, |t, x| if (t + x) % 2 == 0 { 1.0 } else { -1.0 });
        assert!(matches!(fit_mm(&f, 1), Err(StouError::InsufficientUsableLags { .. })));
    }
}
