//! Exact simulation through the Cholesky factor of the lattice covariance.
//!
//! A draw is `mu * 1 + M * eps` where `Sigma = M Mᵀ` and `eps` is a vector of
//! independent standard normals. The factor is the expensive part (`n³/6`
//! multiply-adds for `n` lattice points), so callers that need many draws at
//! one parameter vector should factor once and call [`simulate_exact`]
//! repeatedly.

use rayon::prelude::*;

use crate::error::{Result, StouError};
use crate::linalg::Matrix;
use crate::model::{CorrKind, FieldSample, Lattice, StouParams};
use crate::rng::fill_standard_normal;
use crate::scalar::{dot, Real};

/// Maximum number of lattice points for which a dense covariance may be built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBudget {
    pub max_points: usize,
}

impl Default for MemoryBudget {
    /// A 101 × 101 lattice.
    fn default() -> Self {
        Self {
            max_points: 101 * 101,
        }
    }
}

impl MemoryBudget {
    pub fn check(&self, points: usize) -> Result<()> {
        if points > self.max_points {
            Err(StouError::BudgetExceeded {
                points,
                budget: self.max_points,
            })
        } else {
            Ok(())
        }
    }
}

/// Dense lattice covariance `Sigma[k, k'] = sigma2 * corr(lag(k, k'))`.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix<T> {
    matrix: Matrix<T>,
    sigma2: T,
}

impl<T: Real> CovarianceMatrix<T> {
    /// Wraps an arbitrary symmetric matrix (used for testing the factorization).
    pub fn from_matrix(matrix: Matrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(StouError::DimensionMismatch {
                expected: matrix.rows(),
                found: matrix.cols(),
            });
        }
        let scale = matrix
            .diagonal()
            .into_iter()
            .fold(T::zero(), |m, v| m.max(v.abs()));
        if !matrix.is_symmetric(T::lit(1e-14) * scale.max(T::one())) {
            return Err(StouError::InvalidSpec("covariance must be symmetric".into()));
        }
        let sigma2 = if matrix.rows() > 0 { matrix[(0, 0)] } else { T::zero() };
        Ok(Self { matrix, sigma2 })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }
}

/// Lower-triangular `M` with `M Mᵀ = Sigma`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    lower: Matrix<T>,
}

impl<T: Real> CholeskyFactor<T> {
    /// Wraps a lower-triangular matrix. Entries above the diagonal must be zero.
    pub fn from_lower(lower: Matrix<T>) -> Result<Self> {
        if !lower.is_square() {
            return Err(StouError::DimensionMismatch {
                expected: lower.rows(),
                found: lower.cols(),
            });
        }
        let n = lower.rows();
        if (0..n).any(|i| ((i + 1)..n).any(|j| lower[(i, j)] != T::zero())) {
            return Err(StouError::InvalidSpec("factor must be lower triangular".into()));
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// `M Mᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        let l = &self.lower;
        Matrix::from_fn(n, n, |i, j| {
            let k = i.min(j) + 1;
            dot(&l.row(i)[..k], &l.row(j)[..k])
        })
    }
}

/// Builds the covariance of all lattice points.
pub fn build_covariance<T: Real>(
    params: &StouParams<T>,
    lattice: &Lattice<T>,
    kind: CorrKind,
    budget: MemoryBudget,
) -> Result<CovarianceMatrix<T>> {
    let n = lattice.len();
    budget.check(n)?;
    let sigma2 = params.sigma2();
    // Correlation depends only on the index offsets; tabulate it once.
    let (nx, nt) = (lattice.n_x(), lattice.n_t());
    let table: Vec<T> = (0..nt)
        .flat_map(|ht| (0..nx).map(move |hx| (ht, hx)))
        .map(|(ht, hx)| {
            sigma2
                * params.correlation(
                    kind,
                    T::of_usize(ht) * lattice.dt(),
                    T::of_usize(hx) * lattice.dx(),
                )
        })
        .collect();
    let mut matrix = Matrix::zeros(n, n);
    matrix
        .as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(a, row)| {
            let (ta, xa) = lattice.coords(a);
            for (b, v) in row.iter_mut().enumerate() {
                let (tb, xb) = lattice.coords(b);
                *v = table[ta.abs_diff(tb) * nx + xa.abs_diff(xb)];
            }
        });
    Ok(CovarianceMatrix { matrix, sigma2 })
}

/// Column-oriented Cholesky–Crout in place on the lower triangle of `a`.
/// Returns the index and value of the first non-positive pivot on failure.
fn factor_in_place<T: Real>(a: &mut Matrix<T>, jitter: T) -> std::result::Result<(), (usize, T)> {
    let n = a.rows();
    if jitter != T::zero() {
        for i in 0..n {
            a[(i, i)] = a[(i, i)] + jitter;
        }
    }
    let data = a.as_mut_slice();
    for j in 0..n {
        let (head, tail) = data.split_at_mut((j + 1) * n);
        let row_j = &mut head[j * n..(j + 1) * n];
        let pivot = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(pivot > T::zero()) || !pivot.is_finite() {
            return Err((j, pivot));
        }
        let d = pivot.sqrt();
        row_j[j] = d;
        let inv_d = T::one() / d;
        let row_j = &row_j[..j];
        let update = |row_i: &mut [T]| {
            row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) * inv_d;
        };
        if tail.len() >= 64 * n {
            tail.par_chunks_mut(n).for_each(update);
        } else {
            tail.chunks_mut(n).for_each(update);
        }
    }
    for i in 0..n {
        for v in &mut data[i * n + i + 1..(i + 1) * n] {
            *v = T::zero();
        }
    }
    Ok(())
}

/// Factors `Sigma = M Mᵀ`.
///
/// A non-positive pivot triggers one retry with diagonal jitter `1e-12 * sigma2`
/// (logged as a warning); a second failure is reported as
/// [`StouError::NotPositiveDefinite`].
pub fn cholesky_factor<T: Real>(sigma: &CovarianceMatrix<T>) -> Result<CholeskyFactor<T>> {
    let mut a = sigma.matrix.clone();
    match factor_in_place(&mut a, T::zero()) {
        Ok(()) => Ok(CholeskyFactor { lower: a }),
        Err((pivot, value)) => {
            let jitter = T::lit(1e-12) * sigma.sigma2.abs();
            log::warn!(
                "covariance not numerically positive definite at pivot {pivot} ({value}); \
                 retrying with diagonal jitter {jitter}"
            );
            let mut a = sigma.matrix.clone();
            factor_in_place(&mut a, jitter)
                .map(|()| CholeskyFactor { lower: a })
                .map_err(|(pivot, value)| StouError::NotPositiveDefinite {
                    pivot,
                    value: value.as_f64(),
                })
        }
    }
}

/// Draws `mu * 1 + M eps` on `lattice`.
pub fn simulate_exact<T: Real, R: rand::Rng + ?Sized>(
    factor: &CholeskyFactor<T>,
    mu: T,
    lattice: &Lattice<T>,
    rng: &mut R,
) -> Result<FieldSample<T>> {
    let n = lattice.len();
    if factor.dim() != n {
        return Err(StouError::DimensionMismatch {
            expected: n,
            found: factor.dim(),
        });
    }
    let mut eps = vec![T::zero(); n];
    fill_standard_normal(rng, &mut eps);
    let l = &factor.lower;
    let values = (0..n)
        .map(|i| mu + dot(&l.row(i)[..=i], &eps[..=i]))
        .collect();
    FieldSample::new(*lattice, values)
}
