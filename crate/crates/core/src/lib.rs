//! Gaussian spatio-temporal Ornstein-Uhlenbeck (STOU) fields on space-time
//! lattices: exact and approximate simulation, moments-matching and pairwise
//! composite-likelihood estimation, and three ways of building parameter
//! confidence intervals together with coverage experiments.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix the scalar to `f64`, which is what the experiment runner uses.

pub mod bootstrap;
pub mod cl;
pub mod error;
pub mod interval;
pub mod linalg;
pub mod mm;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Result, StouError};
pub use interval::IntervalEstimate;
pub use linalg::Matrix;
pub use mm::{fit_mm, Axis};
pub use model::{
    corr_canonical, corr_separable, derived_moments, CorrKind, FieldSample, Lattice, ParamName,
    StouParams,
};
pub use scalar::Real;

/// Version of this crate, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type StouParams64 = StouParams<f64>;
pub type StouParams32 = StouParams<f32>;
pub type Lattice64 = Lattice<f64>;
pub type FieldSample64 = FieldSample<f64>;
pub type ThetaCl64 = cl::ThetaCl<f64>;
