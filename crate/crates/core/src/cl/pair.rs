//! Single-pair log-likelihood, score and expected information.
//!
//! With `a = y_i - mu`, `b = y_j - mu`:
//!
//! ```text
//! B = a² + b² - 2 rho a b
//! F = rho (a² + b²) - (1 + rho²) a b
//! l = -1/2 [2 log sigma2 + log(1 - rho²) + B / (sigma2 (1 - rho²))]
//! ```
//!
//! The score components are
//!
//! ```text
//! dl/drho    = rho / (1 - rho²) - F / (sigma2 (1 - rho²)²)
//! dl/dsigma2 = -(1 / sigma2) (1 - B / (2 sigma2 (1 - rho²)))
//! dl/dmu     = (a + b) / (sigma2 (1 + rho))
//! ```
//!
//! The rho component is the usual `kappa rho/(1+rho) (1 - F/(sigma2 rho (1-rho²)))`
//! with `kappa = grad rho / (1 - rho)`, rearranged so that `rho = 0` is not a
//! removable singularity. In terms of `Q = y_i + y_j` the mean component is
//! `-(2 mu / (sigma2 (1 + rho))) (1 - Q / (2 mu))`; the opposite sign, which
//! appears in some statements of this score, fails the finite-difference check.

use crate::error::{Result, StouError};
use crate::scalar::Real;

use super::ThetaCl;

fn check_rho<T: Real>(rho: T) -> Result<()> {
    if rho.abs() >= T::one() - T::lit(1e-12) || !rho.is_finite() {
        Err(StouError::CorrelationAtUnity { rho: rho.as_f64() })
    } else {
        Ok(())
    }
}

/// Bivariate normal log-density of `(y_i, y_j)` plus `log(2 pi)`.
pub fn l_pair<T: Real>(theta: &ThetaCl<T>, y_i: T, y_j: T, rho: T) -> Result<T> {
    check_rho(rho)?;
    let a = y_i - theta.mu;
    let b = y_j - theta.mu;
    let one_m = T::one() - rho * rho;
    let big_b = a * a + b * b - T::lit(2.0) * rho * a * b;
    let half = T::lit(0.5);
    Ok(-half
        * (T::lit(2.0) * theta.sigma2.ln() + one_m.ln() + big_b / (theta.sigma2 * one_m)))
}

/// Gradient of [`l_pair`] in `theta`, given `grad_rho = d rho / d(lambda, c_tilde)`.
pub fn score_u<T: Real>(
    theta: &ThetaCl<T>,
    y_i: T,
    y_j: T,
    rho: T,
    grad_rho: [T; 2],
) -> Result<[T; 4]> {
    check_rho(rho)?;
    let s2 = theta.sigma2;
    let a = y_i - theta.mu;
    let b = y_j - theta.mu;
    let one_m = T::one() - rho * rho;
    let two = T::lit(2.0);
    let big_b = a * a + b * b - two * rho * a * b;
    let big_f = rho * (a * a + b * b) - (T::one() + rho * rho) * a * b;
    let dl_drho = rho / one_m - big_f / (s2 * one_m * one_m);
    Ok([
        dl_drho * grad_rho[0],
        dl_drho * grad_rho[1],
        -(T::one() / s2) * (T::one() - big_b / (two * s2 * one_m)),
        (a + b) / (s2 * (T::one() + rho)),
    ])
}

/// `E[-∇² l]` for one pair at `theta`:
///
/// ```text
/// [ alpha² kappa kappaᵀ                -rho/(sigma2 (1+rho)) kappa   0                  ]
/// [ .                                   1/sigma2²                    0                  ]
/// [ .                                   .                            2/(sigma2 (1+rho)) ]
/// ```
///
/// with `alpha² = (1 + rho²) / (1 + rho)²` and `kappa = grad rho / (1 - rho)`.
pub fn expected_information<T: Real>(
    theta: &ThetaCl<T>,
    rho: T,
    grad_rho: [T; 2],
) -> Result<[[T; 4]; 4]> {
    check_rho(rho)?;
    let s2 = theta.sigma2;
    let one = T::one();
    let alpha2 = (one + rho * rho) / ((one + rho) * (one + rho));
    let kappa = [grad_rho[0] / (one - rho), grad_rho[1] / (one - rho)];
    let cross = -rho / (s2 * (one + rho));
    let mut m = [[T::zero(); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = alpha2 * kappa[i] * kappa[j];
        }
        m[i][2] = cross * kappa[i];
        m[2][i] = m[i][2];
    }
    m[2][2] = one / (s2 * s2);
    m[3][3] = T::lit(2.0) / (s2 * (one + rho));
    Ok(m)
}
