//! Per-parameter confidence intervals.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, StouError};
use crate::model::ParamName;
use crate::scalar::Real;

/// A confidence interval around a point estimate.
///
/// For Monte Carlo intervals `lower`, `median` and `upper` are quantiles of the
/// re-estimates; for asymptotic-normal intervals `median` equals `point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate<T> {
    pub parameter: ParamName,
    pub point: T,
    pub lower: T,
    pub median: T,
    pub upper: T,
    pub level: T,
}

impl<T: Real> IntervalEstimate<T> {
    /// Closed-interval membership.
    pub fn contains(&self, value: T) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

pub fn check_level<T: Real>(level: T) -> Result<()> {
    if level >= T::zero() && level < T::one() {
        Ok(())
    } else {
        Err(StouError::InvalidSpec(format!(
            "coverage level must lie in [0, 1), got {level}"
        )))
    }
}

/// Two-sided standard normal multiplier `z_{(1 + level) / 2}`.
pub fn normal_multiplier<T: Real>(level: T) -> Result<T> {
    check_level(level)?;
    let p = (1.0 + level.as_f64()) / 2.0;
    Ok(T::lit(Normal::standard().inverse_cdf(p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_at_95_percent() {
        let z: f64 = normal_multiplier(0.95).unwrap();
        assert!((z - 1.959964).abs() < 1e-6);
        assert_eq!(normal_multiplier(0.0f64).unwrap(), 0.0);
        assert!(normal_multiplier(1.0f64).is_err());
    }

    #[test]
    fn containment_is_closed() {
        let iv = IntervalEstimate {
            parameter: ParamName::Lambda,
            point: 1.0,
            lower: 0.5,
            median: 1.0,
            upper: 1.5,
            level: 0.95,
        };
        assert!(iv.contains(0.5) && iv.contains(1.5) && !iv.contains(1.6));
        assert_eq!(iv.width(), 1.0);
    }
}
