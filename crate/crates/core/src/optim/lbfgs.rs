//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use crate::{Error, Result};

/// Objective value and gradient at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveEvaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl ObjectiveEvaluation {
    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the Euclidean gradient norm falls to this value.
    pub gradient_tolerance: f64,
    /// Step contraction factor of the backtracking search.
    pub contraction: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            contraction: 0.5,
            sufficient_decrease: 1e-4,
            max_line_search_steps: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// No step satisfied the Armijo condition; the last accepted point is returned.
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
    /// Objective value at the start and after every accepted step.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g`.
fn search_direction(history: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = history
        .back()
        .map_or(1.0, |p| dot(&p.s, &p.y) / dot(&p.y, &p.y));
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for (p, a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes a smooth objective starting from `start`.
///
/// Accepted iterates never increase the objective. Curvature pairs with
/// `y·s <= 1e-10` are skipped.
pub fn lbfgs_minimize<F>(mut objective: F, start: Vec<f64>, config: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> ObjectiveEvaluation,
{
    if config.memory == 0 || config.gradient_tolerance <= 0.0 {
        return Err(Error::invalid("L-BFGS memory and tolerance must be positive"));
    }
    let mut x = start;
    let mut cur = objective(&x);
    if !cur.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "objective or gradient not finite at the starting point".into(),
        ));
    }
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(config.memory);
    let mut trace = vec![cur.value];
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        let gnorm = norm(&cur.gradient);
        if gnorm <= config.gradient_tolerance {
            status = LbfgsStatus::Converged;
            break;
        }
        let mut dir = if history.is_empty() {
            cur.gradient.iter().map(|g| -g / gnorm).collect()
        } else {
            search_direction(&history, &cur.gradient)
        };
        let mut slope = dot(&cur.gradient, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = cur.gradient.iter().map(|g| -g / gnorm).collect();
            slope = -gnorm;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..config.max_line_search_steps {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let eval = objective(&trial);
            if eval.is_finite()
                && eval.value <= cur.value + config.sufficient_decrease * step * slope
            {
                accepted = Some((trial, eval));
                break;
            }
            step *= config.contraction;
        }
        let Some((next_x, next)) = accepted else {
            status = LbfgsStatus::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = next_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next
            .gradient
            .iter()
            .zip(&cur.gradient)
            .map(|(a, b)| a - b)
            .collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        x = next_x;
        cur = next;
        trace.push(cur.value);
        iterations += 1;
    }
    if status == LbfgsStatus::MaxIterations && norm(&cur.gradient) <= config.gradient_tolerance {
        status = LbfgsStatus::Converged;
    }
    Ok(LbfgsResult {
        gradient_norm: norm(&cur.gradient),
        value: cur.value,
        x,
        iterations,
        status,
        trace,
    })
}
