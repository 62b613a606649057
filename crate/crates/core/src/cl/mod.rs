//! Weighted pairwise composite-likelihood (CL) estimation.
//!
//! Only pairs that differ along exactly one axis enter the objective, so the
//! separable correlation `exp(-lambda |d_t| - c_tilde |d_x|)` coincides with the
//! canonical STOU correlation on every pair used, while being differentiable in
//! `theta = (lambda, c_tilde, sigma2, mu)`.
//!
//! Variance of the CL estimator is estimated with the sandwich
//! `W H⁻¹ J* H⁻¹`, where `H` is the expected negative Hessian of the objective
//! and `J*` the window-subsampling empirical variance of the pair scores.

mod fit;
mod objective;
mod pair;

pub use fit::{maximize_cl, reported_parameters, sandwich_ci, ClFit, ClIntervals, SandwichResult};
pub use objective::{
    admissible_pairs, hessian_h, pairwise_loglik, total_weight, wsev_j, AxisPair, LagClass,
    Wsev,
};
pub use pair::{expected_information, l_pair, score_u};

use crate::error::{Result, StouError};
use crate::model::{Lattice, ParamName, StouParams};
use crate::scalar::Real;

/// Components of the CL parameter vector, in vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClParam {
    Lambda = 0,
    CTilde = 1,
    Sigma2 = 2,
    Mu = 3,
}

impl ClParam {
    pub const ALL: [ClParam; 4] = [ClParam::Lambda, ClParam::CTilde, ClParam::Sigma2, ClParam::Mu];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> ParamName {
        match self {
            ClParam::Lambda => ParamName::Lambda,
            ClParam::CTilde => ParamName::CTilde,
            ClParam::Sigma2 => ParamName::Sigma2,
            ClParam::Mu => ParamName::Mu,
        }
    }

    /// Whether the optimizer searches this component on the log scale.
    fn is_positive(self) -> bool {
        !matches!(self, ClParam::Mu)
    }
}

impl std::str::FromStr for ClParam {
    type Err = StouError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().parse::<ParamName>()? {
            ParamName::Lambda => Ok(ClParam::Lambda),
            ParamName::CTilde => Ok(ClParam::CTilde),
            ParamName::Sigma2 => Ok(ClParam::Sigma2),
            ParamName::Mu => Ok(ClParam::Mu),
            other => Err(StouError::InvalidSpec(format!(
                "`{other}` is not a composite-likelihood parameter"
            ))),
        }
    }
}

/// `theta = (lambda, c_tilde, sigma2, mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaCl<T> {
    pub lambda: T,
    pub c_tilde: T,
    pub sigma2: T,
    pub mu: T,
}

impl<T: Real> ThetaCl<T> {
    pub fn new(lambda: T, c_tilde: T, sigma2: T, mu: T) -> Result<Self> {
        // validation is shared with the model parameters
        StouParams::from_derived(lambda, c_tilde, sigma2, mu)?;
        Ok(Self {
            lambda,
            c_tilde,
            sigma2,
            mu,
        })
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.lambda, self.c_tilde, self.sigma2, self.mu]
    }

    pub fn from_array(v: [T; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn get(&self, p: ClParam) -> T {
        self.to_array()[p.index()]
    }

    pub fn to_params(&self) -> Result<StouParams<T>> {
        StouParams::from_derived(self.lambda, self.c_tilde, self.sigma2, self.mu)
    }

    /// Correlation and its gradient in `(lambda, c_tilde)` for an axis lag class.
    pub fn rho(&self, class: LagClass, lattice: &Lattice<T>) -> (T, [T; 2]) {
        let h = T::of_usize(class.steps);
        match class.axis {
            crate::mm::Axis::Temporal => {
                let d = h * lattice.dt();
                let r = (-self.lambda * d).exp();
                (r, [-d * r, T::zero()])
            }
            crate::mm::Axis::Spatial => {
                let d = h * lattice.dx();
                let r = (-self.c_tilde * d).exp();
                (r, [T::zero(), -d * r])
            }
        }
    }
}

impl<T: Real> From<StouParams<T>> for ThetaCl<T> {
    fn from(p: StouParams<T>) -> Self {
        Self {
            lambda: p.lambda(),
            c_tilde: p.c_tilde(),
            sigma2: p.sigma2(),
            mu: p.mu(),
        }
    }
}

/// Pair weights: `w_ij = 1` for pairs at most `cutoff_d` grid steps apart along
/// a single axis, `0` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairWeightSpec {
    cutoff_d: usize,
}

impl PairWeightSpec {
    pub const DEFAULT_CUTOFF: usize = 3;

    pub fn new(cutoff_d: usize) -> Result<Self> {
        if cutoff_d == 0 {
            return Err(StouError::InvalidSpec("pair cutoff must be >= 1".into()));
        }
        Ok(Self { cutoff_d })
    }

    pub fn cutoff_d(&self) -> usize {
        self.cutoff_d
    }
}

impl Default for PairWeightSpec {
    fn default() -> Self {
        Self {
            cutoff_d: Self::DEFAULT_CUTOFF,
        }
    }
}

/// Sliding subsampling windows, in grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub window_nx: usize,
    pub window_nt: usize,
    pub step_x: usize,
    pub step_t: usize,
}

impl Default for WindowSpec {
    /// 11 × 11 windows moved 5 points at a time.
    fn default() -> Self {
        Self {
            window_nx: 11,
            window_nt: 11,
            step_x: 5,
            step_t: 5,
        }
    }
}

impl WindowSpec {
    pub fn validate<T: Real>(&self, lattice: &Lattice<T>) -> Result<()> {
        if self.window_nx < 2 || self.window_nt < 2 {
            return Err(StouError::InvalidSpec("window extents must be >= 2".into()));
        }
        if self.step_x == 0 || self.step_t == 0 {
            return Err(StouError::InvalidSpec("window strides must be >= 1".into()));
        }
        if self.window_nx > lattice.n_x() || self.window_nt > lattice.n_t() {
            return Err(StouError::InvalidSpec(format!(
                "a {}×{} window does not fit a {}×{} lattice",
                self.window_nt,
                self.window_nx,
                lattice.n_t(),
                lattice.n_x()
            )));
        }
        Ok(())
    }

    /// Top-left `(t, x)` corners of all windows, time-major.
    pub fn corners<T: Real>(&self, lattice: &Lattice<T>) -> Vec<(usize, usize)> {
        if self.validate(lattice).is_err() {
            return Vec::new();
        }
        let ts = (0..=lattice.n_t() - self.window_nt).step_by(self.step_t);
        ts.flat_map(|t| {
            (0..=lattice.n_x() - self.window_nx)
                .step_by(self.step_x)
                .map(move |x| (t, x))
        })
        .collect()
    }
}

/// Which components of `theta` are estimated; the rest stay at `fixed`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationScenario<T> {
    free: Vec<ClParam>,
    fixed: ThetaCl<T>,
}

impl<T: Real> EstimationScenario<T> {
    /// `fixed` supplies values for every component not in `free`; its free
    /// components are ignored.
    pub fn new(free: &[ClParam], fixed: ThetaCl<T>) -> Result<Self> {
        let mut free = free.to_vec();
        free.sort();
        free.dedup();
        if free.is_empty() {
            return Err(StouError::InvalidSpec(
                "scenario must free at least one parameter".into(),
            ));
        }
        Ok(Self { free, fixed })
    }

    /// Scenario with every component held at `theta`. Only useful for
    /// evaluating the objective: [`maximize_cl`] returns the start unchanged and
    /// [`sandwich_ci`] rejects it.
    pub fn all_fixed(theta: ThetaCl<T>) -> Self {
        Self {
            free: Vec::new(),
            fixed: theta,
        }
    }

    /// Parses a comma-separated free set such as `lambda,c_tilde`.
    pub fn parse_free_set(s: &str) -> Result<Vec<ClParam>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn free(&self) -> &[ClParam] {
        &self.free
    }

    pub fn fixed(&self) -> &ThetaCl<T> {
        &self.fixed
    }

    pub fn is_free(&self, p: ClParam) -> bool {
        self.free.contains(&p)
    }

    /// `start` with the fixed components pinned.
    pub fn pin(&self, start: &ThetaCl<T>) -> ThetaCl<T> {
        let s = start.to_array();
        let f = self.fixed.to_array();
        let mut out = f;
        for p in &self.free {
            out[p.index()] = s[p.index()];
        }
        ThetaCl {
            lambda: out[0],
            c_tilde: out[1],
            sigma2: out[2],
            mu: out[3],
        }
    }
}
