//! Basin-hopping: a Metropolis random walk over local minima found by L-BFGS.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lbfgs::{lbfgs_minimize, LocalMinimum};
use crate::error::Result;

/// Settings for one basin-hopping chain.
#[derive(Debug, Clone, Copy)]
pub struct BasinHopConfig {
    pub n_hops: usize,
    pub step: f64,
    pub temperature: f64,
    pub memory: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

/// Hop-size adaptation interval and target acceptance rate.
const ADAPT_EVERY: usize = 10;
const TARGET_ACCEPTANCE: f64 = 0.5;
const ADAPT_FACTOR: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct BasinHopOutcome {
    pub z: Vec<f64>,
    pub value: f64,
    pub lbfgs_calls: usize,
    pub hops: usize,
    pub accepted: usize,
    /// Whether the local solve that produced the best minimum met the gradient tolerance.
    pub converged: bool,
    /// Best value seen after each local minimization.
    pub best_trace: Vec<f64>,
}

/// Runs basin-hopping from `z0`.
///
/// Each hop perturbs the current minimum with Gaussian noise of scale `step` (in the
/// objective's own coordinates), re-minimizes, and accepts the new minimum with probability
/// `min(1, exp(−Δ/temperature))`. The step is adapted every ten hops toward 50% acceptance.
/// Only a non-finite objective at `z0` is an error; hops landing in invalid regions are
/// rejected.
pub fn basin_hop<F, R>(objective: &F, z0: &[f64], config: &BasinHopConfig, rng: &mut R) -> Result<BasinHopOutcome>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
    R: Rng + ?Sized,
{
    let first = lbfgs_minimize(objective, z0, config.memory, config.max_iter, config.grad_tol)?;
    let mut current = first.clone();
    let mut best: LocalMinimum = first;
    let mut best_trace = vec![best.value];
    let mut calls = 1;
    let mut accepted = 0;
    let mut window_accepted = 0;
    let mut step = config.step;

    for hop in 1..=config.n_hops {
        let candidate: Vec<f64> = current
            .z
            .iter()
            .map(|x| {
                let g: f64 = StandardNormal.sample(rng);
                x + step * g
            })
            .collect();
        calls += 1;
        let local = lbfgs_minimize(objective, &candidate, config.memory, config.max_iter, config.grad_tol).ok();
        // draw unconditionally so the stream position does not depend on the outcome
        let u: f64 = rng.random();
        if let Some(local) = local {
            let delta = local.value - current.value;
            let accept = delta <= 0.0 || u < (-delta / config.temperature).exp();
            if local.value < best.value {
                best = local.clone();
            }
            if accept {
                current = local;
                accepted += 1;
                window_accepted += 1;
            }
        }
        best_trace.push(best.value);
        if hop % ADAPT_EVERY == 0 {
            let rate = window_accepted as f64 / ADAPT_EVERY as f64;
            step = if rate > TARGET_ACCEPTANCE { step / ADAPT_FACTOR } else { step * ADAPT_FACTOR };
            window_accepted = 0;
        }
    }

    Ok(BasinHopOutcome {
        z: best.z,
        value: best.value,
        lbfgs_calls: calls,
        hops: config.n_hops,
        accepted,
        converged: best.converged,
        best_trace,
    })
}
