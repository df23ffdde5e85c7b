//! Bounded solver for one-dimensional stationarity conditions of the form
//! `c2 t^2 + c1 t + c0 = 0`.

use thiserror::Error;

/// Distance kept from the interval ends so log terms stay finite.
pub const BOUNDARY_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticStationarity {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum QuadraticError {
    #[error("stationarity condition has no real root")]
    NoRealRoot,
    #[error("degenerate stationarity condition")]
    Degenerate,
}

impl QuadraticStationarity {
    pub fn new(c2: f64, c1: f64, c0: f64, lo: f64, hi: f64) -> Self {
        debug_assert!(lo < hi);
        QuadraticStationarity { c2, c1, c0, lo, hi }
    }

    fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.lo + BOUNDARY_EPS, self.hi - BOUNDARY_EPS)
    }

    /// Real roots, unclamped. A vanishing `c2` yields the linear root.
    pub fn roots(&self) -> Result<Vec<f64>, QuadraticError> {
        let QuadraticStationarity { c2, c1, c0, .. } = *self;
        if !(c2.is_finite() && c1.is_finite() && c0.is_finite()) {
            return Err(QuadraticError::Degenerate);
        }
        let scale = c1.abs().max(c0.abs());
        if c2 == 0.0 || c2.abs() <= 1e-15 * scale {
            if c1 == 0.0 {
                return Err(QuadraticError::Degenerate);
            }
            return Ok(vec![-c0 / c1]);
        }
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return Err(QuadraticError::NoRealRoot);
        }
        // cancellation-free pair of roots
        let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
        if q == 0.0 {
            return Ok(vec![0.0]);
        }
        Ok(vec![q / c2, c0 / q])
    }
}

/// Solves the stationarity condition on `[lo, hi]`.
///
/// Each real root is clamped to `[lo + ε, hi − ε]`; when several candidates
/// remain, `objective` picks the one with the larger value (first wins on ties).
pub fn solve_bounded_quadratic<F>(q: &QuadraticStationarity, objective: F) -> Result<f64, QuadraticError>
where
    F: Fn(f64) -> f64,
{
    let roots = q.roots()?;
    let mut best: Option<(f64, f64)> = None;
    for r in roots {
        let t = q.clamp(r);
        let v = objective(t);
        match best {
            Some((_, bv)) if !(v > bv) => {}
            _ => best = Some((t, v)),
        }
    }
    best.map(|(t, _)| t).ok_or(QuadraticError::Degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::golden_section_maximize;

    #[test]
    fn linear_case() {
        let q = QuadraticStationarity::new(0.0, -2.0, 1.0, 0.0, 1.0);
        assert_eq!(solve_bounded_quadratic(&q, |_| 0.0).unwrap(), 0.5);
    }

    #[test]
    fn out_of_range_root_is_clamped() {
        // single root at 1.3
        let q = QuadraticStationarity::new(0.0, 1.0, -1.3, 0.0, 1.0);
        assert_eq!(solve_bounded_quadratic(&q, |_| 0.0).unwrap(), 1.0 - BOUNDARY_EPS);
    }

    #[test]
    fn complex_roots_are_reported() {
        let q = QuadraticStationarity::new(1.0, 0.0, 1.0, 0.0, 1.0);
        assert_eq!(solve_bounded_quadratic(&q, |t| t), Err(QuadraticError::NoRealRoot));
    }

    #[test]
    fn root_selection_follows_the_objective() {
        // f'(t) = t^2 - t has roots 0 and 1; f(t) = t^3/3 - t^2/2 is maximal at 0 on [0,1]
        let f = |t: f64| t * t * t / 3.0 - t * t / 2.0;
        let q = QuadraticStationarity::new(1.0, -1.0, 0.0, 0.0, 1.0);
        let t = solve_bounded_quadratic(&q, f).unwrap();
        let g = golden_section_maximize(f, BOUNDARY_EPS, 1.0 - BOUNDARY_EPS, 1e-12);
        assert!((t - g).abs() < 1e-6, "{t} vs {g}");

        // an objective preferring the interior: h'(t) ∝ -(t^2 - t + 0.21), roots 0.3 and 0.7
        let h = |t: f64| -(t * t * t / 3.0 - t * t / 2.0 + 0.21 * t);
        let q = QuadraticStationarity::new(1.0, -1.0, 0.21, 0.0, 1.0);
        let t = solve_bounded_quadratic(&q, h).unwrap();
        let g = golden_section_maximize(h, 0.5, 1.0 - BOUNDARY_EPS, 1e-12);
        assert!((t - 0.7).abs() < 1e-12 && (t - g).abs() < 1e-6);
    }

    #[test]
    fn tiny_leading_coefficient_is_stable() {
        let q = QuadraticStationarity::new(1e-20, -4.0, 1.0, 0.0, 1.0);
        let t = solve_bounded_quadratic(&q, |t| -(t - 0.25).powi(2)).unwrap();
        assert!((t - 0.25).abs() < 1e-15);
    }
}
