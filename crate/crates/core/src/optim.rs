//! Nelder-Mead simplex minimization.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct NelderMead<T> {
    /// Stop when `f_worst - f_best <= f_tol * (|f_best| + |f_worst|) / 2`.
    pub f_tol: T,
    pub max_iter: usize,
    /// Number of times the search is restarted from the incumbent after converging.
    pub restarts: usize,
}

impl<T: Real> Default for NelderMead<T> {
    fn default() -> Self {
        Self {
            f_tol: T::lit(1e-8),
            max_iter: 2000,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Non-finite objective values are treated as `+inf`.
fn eval<T: Real>(f: &mut impl FnMut(&[T]) -> T, x: &[T]) -> T {
    let v = f(x);
    if v.is_nan() {
        T::infinity()
    } else {
        v
    }
}

impl<T: Real> NelderMead<T> {
    /// Minimizes `f` starting from `x0` with initial simplex edges `steps`.
    pub fn minimize(
        &self,
        mut f: impl FnMut(&[T]) -> T,
        x0: &[T],
        steps: &[T],
    ) -> Minimum<T> {
        assert_eq!(x0.len(), steps.len());
        if x0.is_empty() {
            let value = eval(&mut f, x0);
            return Minimum {
                x: Vec::new(),
                value,
                iterations: 0,
                converged: true,
            };
        }
        let mut best = self.run(&mut f, x0, steps, self.max_iter);
        for _ in 0..self.restarts {
            let budget = self.max_iter.saturating_sub(best.iterations);
            if budget == 0 {
                break;
            }
            let again = self.run(&mut f, &best.x, steps, budget);
            let improved = again.value < best.value;
            let iterations = best.iterations + again.iterations;
            if improved {
                best = again;
            } else {
                best.converged = best.converged && again.converged;
            }
            best.iterations = iterations;
        }
        best
    }

    fn run(
        &self,
        f: &mut impl FnMut(&[T]) -> T,
        x0: &[T],
        steps: &[T],
        max_iter: usize,
    ) -> Minimum<T> {
        let n = x0.len();
        let (alpha, gamma, rho, shrink) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
        let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(f, x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] = x[i] + steps[i];
            let v = eval(f, &x);
            simplex.push((x, v));
        }
        let order = |s: &mut Vec<(Vec<T>, T)>| {
            s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        };
        let mut iterations = 0;
        let mut converged = false;
        let half = T::lit(0.5);
        while iterations < max_iter {
            order(&mut simplex);
            let (lo, hi) = (simplex[0].1, simplex[n].1);
            if lo.is_finite() && hi.is_finite() && hi - lo <= self.f_tol * half * (lo.abs() + hi.abs())
            {
                converged = true;
                break;
            }
            iterations += 1;
            let mut centroid = vec![T::zero(); n];
            for (x, _) in &simplex[..n] {
                for (c, &xi) in centroid.iter_mut().zip(x) {
                    *c = *c + xi;
                }
            }
            let inv_n = T::one() / T::of_usize(n);
            centroid.iter_mut().for_each(|c| *c = *c * inv_n);
            let worst = simplex[n].0.clone();
            let along = |t: T| -> Vec<T> {
                centroid
                    .iter()
                    .zip(&worst)
                    .map(|(&c, &w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(alpha);
            let fr = eval(f, &xr);
            if fr < simplex[0].1 {
                let xe = along(gamma);
                let fe = eval(f, &xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * rho);
                let fc = eval(f, &xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(f, &xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x_best = simplex[0].0.clone();
            for (x, v) in simplex.iter_mut().skip(1) {
                for (xi, &bi) in x.iter_mut().zip(&x_best) {
                    *xi = bi + shrink * (*xi - bi);
                }
                *v = eval(f, x);
            }
        }
        order(&mut simplex);
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            iterations,
            converged,
        }
    }
}
