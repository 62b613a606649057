//! Model parameters, lattice geometry and the two correlation functions.
//!
//! The canonical STOU field is driven by a Lévy seed with mean `mu_seed` and
//! variance `tau2` per unit area. Its stationary moments are
//!
//! ```text
//! sigma2 = c * tau2 / (2 * lambda^2)
//! mu     = 2 * c * mu_seed / lambda^2
//! ```
//!
//! and its correlation between two space-time points is
//! `exp(-lambda * max(|d_t|, |d_x| / c))`.

use crate::error::{Result, StouError};
use crate::scalar::Real;

/// STOU model parameters.
///
/// Stored internally as `(lambda, c_tilde, sigma2, mu)` with `c_tilde = lambda / c`,
/// the parameterization used by the composite-likelihood optimizer. The natural
/// parameters `(c, mu_seed, tau2)` are derived views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StouParams<T> {
    lambda: T,
    c_tilde: T,
    sigma2: T,
    mu: T,
}

fn check_positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(StouError::InvalidParameter {
            name,
            value: v.as_f64(),
            reason: "must be finite and > 0",
        })
    }
}

fn check_finite<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(StouError::InvalidParameter {
            name,
            value: v.as_f64(),
            reason: "must be finite",
        })
    }
}

impl<T: Real> StouParams<T> {
    /// Builds parameters from the seed description `(lambda, c, mu_seed, tau2)`.
    pub fn from_natural(lambda: T, c: T, mu_seed: T, tau2: T) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_positive("c", c)?;
        check_finite("mu_seed", mu_seed)?;
        check_positive("tau2", tau2)?;
        let two = T::lit(2.0);
        let l2 = lambda * lambda;
        Self::from_derived(lambda, lambda / c, c * tau2 / (two * l2), two * c * mu_seed / l2)
    }

    /// Builds parameters from the field description `(lambda, c_tilde, sigma2, mu)`.
    pub fn from_derived(lambda: T, c_tilde: T, sigma2: T, mu: T) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_positive("c_tilde", c_tilde)?;
        check_positive("sigma2", sigma2)?;
        check_finite("mu", mu)?;
        Ok(Self {
            lambda,
            c_tilde,
            sigma2,
            mu,
        })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn c_tilde(&self) -> T {
        self.c_tilde
    }

    /// Field variance.
    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    /// Field mean.
    pub fn mu(&self) -> T {
        self.mu
    }

    /// Ambit-cone speed, space units per time unit.
    pub fn c(&self) -> T {
        self.lambda / self.c_tilde
    }

    /// Lévy-seed variance per unit area.
    pub fn tau2(&self) -> T {
        T::lit(2.0) * self.lambda * self.c_tilde * self.sigma2
    }

    pub fn tau(&self) -> T {
        self.tau2().sqrt()
    }

    /// Lévy-seed mean per unit area.
    pub fn mu_seed(&self) -> T {
        self.lambda * self.c_tilde * self.mu / T::lit(2.0)
    }

    /// Stationary `(mean, variance)` of the field.
    pub fn derived_moments(&self) -> (T, T) {
        (self.mu, self.sigma2)
    }

    pub fn correlation(&self, kind: CorrKind, d_t: T, d_x: T) -> T {
        match kind {
            CorrKind::Canonical => corr_canonical(self, d_t, d_x),
            CorrKind::Separable => corr_separable(self, d_t, d_x),
        }
    }

    /// Value of a named scalar, natural or derived.
    pub fn get(&self, p: ParamName) -> T {
        match p {
            ParamName::Lambda => self.lambda(),
            ParamName::CTilde => self.c_tilde(),
            ParamName::C => self.c(),
            ParamName::MuSeed => self.mu_seed(),
            ParamName::Tau => self.tau(),
            ParamName::Mu => self.mu(),
            ParamName::Sigma2 => self.sigma2(),
        }
    }

    pub fn cast<U: Real>(&self) -> StouParams<U> {
        StouParams {
            lambda: U::lit(self.lambda.as_f64()),
            c_tilde: U::lit(self.c_tilde.as_f64()),
            sigma2: U::lit(self.sigma2.as_f64()),
            mu: U::lit(self.mu.as_f64()),
        }
    }
}

/// Stationary `(mean, variance)` of the field for `params`.
pub fn derived_moments<T: Real>(params: &StouParams<T>) -> (T, T) {
    params.derived_moments()
}

/// Named scalar quantities reported by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    Lambda,
    CTilde,
    C,
    MuSeed,
    Tau,
    Mu,
    Sigma2,
}

impl ParamName {
    /// Parameters reported by the Monte Carlo intervals, in table order.
    pub const MONTE_CARLO: [ParamName; 6] = [
        ParamName::Lambda,
        ParamName::C,
        ParamName::MuSeed,
        ParamName::Tau,
        ParamName::Mu,
        ParamName::Sigma2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::Lambda => "lambda",
            ParamName::CTilde => "c_tilde",
            ParamName::C => "c",
            ParamName::MuSeed => "mu_seed",
            ParamName::Tau => "tau",
            ParamName::Mu => "mu",
            ParamName::Sigma2 => "sigma2",
        }
    }
}

impl std::fmt::Display for ParamName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ParamName {
    type Err = StouError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "lambda" => ParamName::Lambda,
            "c_tilde" | "c-tilde" => ParamName::CTilde,
            "c" => ParamName::C,
            "mu_seed" | "mu-seed" => ParamName::MuSeed,
            "tau" => ParamName::Tau,
            "mu" => ParamName::Mu,
            "sigma2" => ParamName::Sigma2,
            other => return Err(StouError::InvalidSpec(format!("unknown parameter `{other}`"))),
        })
    }
}

/// Which correlation function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrKind {
    /// `exp(-lambda * max(|d_t|, |d_x| / c))`, the exact STOU correlation.
    #[default]
    Canonical,
    /// `exp(-lambda |d_t| - c_tilde |d_x|)`; agrees with the canonical form on the axes.
    Separable,
}

pub fn corr_canonical<T: Real>(params: &StouParams<T>, d_t: T, d_x: T) -> T {
    // lambda * max(|d_t|, |d_x| / c) == max(lambda |d_t|, c_tilde |d_x|)
    let reach = (params.lambda * d_t.abs()).max(params.c_tilde * d_x.abs());
    (-reach).exp()
}

pub fn corr_separable<T: Real>(params: &StouParams<T>, d_t: T, d_x: T) -> T {
    (-params.lambda * d_t.abs() - params.c_tilde * d_x.abs()).exp()
}

/// Regular space-time lattice. Points are indexed time-major:
/// `k = t_index * n_x + x_index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice<T> {
    n_x: usize,
    n_t: usize,
    dx: T,
    dt: T,
}

impl<T: Real> Lattice<T> {
    pub fn new(n_x: usize, n_t: usize, dx: T, dt: T) -> Result<Self> {
        if n_x == 0 || n_t == 0 {
            return Err(StouError::InvalidLattice(format!(
                "need at least one point per axis, got n_x={n_x}, n_t={n_t}"
            )));
        }
        if !(dx.is_finite() && dx > T::zero() && dt.is_finite() && dt > T::zero()) {
            return Err(StouError::InvalidLattice(format!(
                "spacings must be positive, got dx={dx}, dt={dt}"
            )));
        }
        Ok(Self { n_x, n_t, dx, dt })
    }

    /// Square `n × n` lattice with equal spacing in both directions.
    pub fn square(n: usize, h: T) -> Result<Self> {
        Self::new(n, n, h, h)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Total number of points.
    pub fn len(&self) -> usize {
        self.n_x * self.n_t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, t: usize, x: usize) -> usize {
        t * self.n_x + x
    }

    /// `(t_index, x_index)` of flat index `k`.
    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k / self.n_x, k % self.n_x)
    }

    /// Physical `(d_t, d_x)` lag between flat indices `a` and `b`.
    pub fn lag(&self, a: usize, b: usize) -> (T, T) {
        let (ta, xa) = self.coords(a);
        let (tb, xb) = self.coords(b);
        (
            T::of_usize(ta.abs_diff(tb)) * self.dt,
            T::of_usize(xa.abs_diff(xb)) * self.dx,
        )
    }
}

/// One realization on a lattice, stored time-major (`n_t` rows of `n_x` values).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample<T> {
    lattice: Lattice<T>,
    values: Vec<T>,
}

impl<T: Real> FieldSample<T> {
    pub fn new(lattice: Lattice<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(StouError::DimensionMismatch {
                expected: lattice.len(),
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(StouError::InvalidField(format!(
                "non-finite value at index {k}"
            )));
        }
        Ok(Self { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice<T> {
        &self.lattice
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, x: usize) -> T {
        self.values[self.lattice.index(t, x)]
    }

    /// Values at time index `t`.
    pub fn time_slice(&self, t: usize) -> &[T] {
        let n = self.lattice.n_x;
        &self.values[t * n..(t + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.lattice, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::of_usize(self.values.len())
    }

    /// Sample variance with the `1/n` divisor.
    pub fn variance(&self) -> T {
        let m = self.mean();
        self.values.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::of_usize(self.values.len())
    }
}
