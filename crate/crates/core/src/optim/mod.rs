//! Numerical workhorses.

mod golden;
mod lbfgs;
mod quadratic;

pub use golden::golden_section_maximize;
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult, LbfgsStatus, ObjectiveEvaluation};
pub use quadratic::{solve_bounded_quadratic, QuadraticError, QuadraticStationarity, BOUNDARY_EPS};

/// Central-difference gradient of `f` at `point`.
pub fn finite_difference_gradient<F>(f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(&x);
            x[i] = orig - step;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_quadratic_form() {
        // f(x) = x^T A x with A symmetric; gradient 2 A x
        let a = [[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, 3.0]];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += x[i] * a[i][j] * x[j];
                }
            }
            s
        };
        let x = [0.3, -1.2, 0.7];
        let g = finite_difference_gradient(f, &x, 1e-5);
        for i in 0..3 {
            let exact: f64 = 2.0 * (0..3).map(|j| a[i][j] * x[j]).sum::<f64>();
            assert!((g[i] - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn fd_of_constant_is_zero() {
        let g = finite_difference_gradient(|_| 4.2, &[1.0, 2.0, 3.0], 1e-5);
        assert!(g.iter().all(|v| *v == 0.0));
    }
}
