//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 40;

/// A local minimum (or the best iterate when the solver stopped early).
#[derive(Debug, Clone)]
pub struct LocalMinimum {
    pub z: Vec<f64>,
    pub value: f64,
    pub n_evals: usize,
    pub iterations: usize,
    /// Gradient norm fell below the tolerance.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Probe {
    step: f64,
    value: f64,
    slope: f64,
    z: Vec<f64>,
    grad: Vec<f64>,
}

struct LineSearch<'a, F> {
    objective: &'a F,
    origin: &'a [f64],
    direction: &'a [f64],
    value0: f64,
    slope0: f64,
    evals: usize,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> LineSearch<'_, F> {
    fn probe(&mut self, step: f64) -> Probe {
        self.evals += 1;
        let z: Vec<f64> = self.origin.iter().zip(self.direction).map(|(x, d)| x + step * d).collect();
        let mut grad = vec![0.0; z.len()];
        let value = (self.objective)(&z, &mut grad);
        let slope = dot(&grad, self.direction);
        if value.is_finite() && slope.is_finite() {
            Probe { step, value, slope, z, grad }
        } else {
            Probe { step, value: f64::INFINITY, slope: f64::NAN, z, grad }
        }
    }

    fn armijo(&self, p: &Probe) -> bool {
        p.value <= self.value0 + C1 * p.step * self.slope0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -C2 * self.slope0
    }

    fn budget_left(&self) -> bool {
        self.evals < MAX_LINE_SEARCH_EVALS
    }

    /// Returns an acceptable point, or the lowest point with sufficient decrease found.
    fn run(&mut self, initial_step: f64) -> Option<Probe> {
        let mut prev = Probe {
            step: 0.0,
            value: self.value0,
            slope: self.slope0,
            z: self.origin.to_vec(),
            grad: Vec::new(),
        };
        let mut step = initial_step;
        let mut first = true;
        while self.budget_left() {
            let cur = self.probe(step);
            if !cur.value.is_finite() {
                // overshoot into an invalid region: shrink toward the last good point
                step = prev.step + 0.25 * (step - prev.step);
                if step - prev.step <= 1e-20 {
                    break;
                }
                continue;
            }
            if !self.armijo(&cur) || (!first && cur.value >= prev.value) {
                return self.zoom(prev, cur);
            }
            if self.curvature(&cur) {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            first = false;
            step = cur.step * 2.0;
            prev = cur;
        }
        (prev.step > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        while self.budget_left() {
            let width = hi.step - lo.step;
            if width.abs() <= 1e-16 * lo.step.abs().max(1e-16) {
                break;
            }
            let step = interpolate(&lo, &hi);
            let cur = self.probe(step);
            if !cur.value.is_finite() || !self.armijo(&cur) || cur.value >= lo.value {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Some(cur);
                }
                if cur.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        (lo.step > 0.0).then_some(lo)
    }
}

/// Safeguarded cubic interpolation between two probes, falling back to bisection.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.step, hi.step);
    let mid = 0.5 * (a + b);
    if !hi.value.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if t.is_finite() && t >= left + margin && t <= right - margin {
        t
    } else {
        mid
    }
}

/// Minimizes `objective` (which returns the value and writes the gradient) from `z0`.
///
/// Stops when the gradient norm is at most `grad_tol`, after `max_iter` iterations, or when
/// the line search can no longer make progress (reported as `converged = false`).
pub fn lbfgs_minimize<F>(objective: &F, z0: &[f64], memory: usize, max_iter: usize, grad_tol: f64) -> Result<LocalMinimum>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let dim = z0.len();
    let mut z = z0.to_vec();
    let mut grad = vec![0.0; dim];
    let mut value = objective(&z, &mut grad);
    let mut n_evals = 1;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    let memory = memory.max(1);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut iterations = 0;
    let mut converged = norm(&grad) <= grad_tol;

    while !converged && iterations < max_iter {
        let mut direction = two_loop(&grad, &history);
        let mut slope = dot(&direction, &grad);
        if !(slope < 0.0) {
            history.clear();
            direction = grad.iter().map(|g| -g).collect();
            slope = dot(&direction, &grad);
        }
        let initial_step = if history.is_empty() { (1.0 / norm(&direction)).min(1.0) } else { 1.0 };
        let mut search =
            LineSearch { objective, origin: &z, direction: &direction, value0: value, slope0: slope, evals: 0 };
        let found = search.run(initial_step);
        n_evals += search.evals;
        let Some(next) = found else {
            if history.is_empty() {
                break;
            }
            // retry once from steepest descent before giving up
            history.clear();
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = next.z.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        z = next.z;
        grad = next.grad;
        value = next.value;
        converged = norm(&grad) <= grad_tol;
    }
    Ok(LocalMinimum { z, value, n_evals, iterations, converged })
}

fn two_loop(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let scale = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= scale);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}
