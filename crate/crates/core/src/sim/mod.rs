//! Field simulators: exact (covariance factorization) and approximate (ambit-set grid).

pub mod cholesky;
pub mod grid;

pub use cholesky::{
    build_covariance, cholesky_factor, simulate_exact, CholeskyFactor, CovarianceMatrix,
    MemoryBudget,
};
pub use grid::{simulate_grid, GridSimConfig, GridSimulator};
