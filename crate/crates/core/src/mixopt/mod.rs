//! Optimal mixtures by mirror descent on the simplex, and analyses built on it.

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laws::LawParams;
use crate::mixture::{js_distance_weights, MixtureVector, TargetWeights};

/// Step halvings allowed per iteration before the iterate is declared stationary.
pub const MAX_HALVINGS: usize = 40;
/// Weights below this are reported as exact zeros.
pub const SNAP_THRESHOLD: f64 = 1e-12;
/// A target-weight vector is a fixed point when `JS(w, h*(w))` is below this.
pub const FIXED_POINT_JS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub eta: f64,
    pub max_iter: usize,
    /// Stop once `max |h^{t+1} − h^t| < tol`.
    pub tol: f64,
    /// Post-hoc floor on every reported weight.
    pub min_weight: f64,
    /// Starting point; uniform when absent.
    pub h0: Option<Vec<f64>>,
    pub record_trajectory: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig { eta: 0.1, max_iter: 10_000, tol: 1e-9, min_weight: 0.0, h0: None, record_trajectory: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureReport {
    pub h_star: MixtureVector,
    /// Weighted objective at `h_star`.
    pub objective_value: f64,
    pub n_iter: usize,
    pub trajectory: Option<Vec<MixtureVector>>,
    pub flooring_applied: bool,
    /// The step tolerance was met before `max_iter`.
    pub converged: bool,
    /// Total step halvings over the run.
    pub halvings: usize,
}

struct Objective<'a> {
    laws: &'a [(LawParams, f64)],
    n: f64,
    d: f64,
}

impl Objective<'_> {
    fn value(&self, h: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (law, w) in self.laws {
            if *w > 0.0 {
                total += w * law.eval(self.n, self.d, h)?;
            }
        }
        Ok(total)
    }

    fn value_grad(&self, h: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mut g = vec![0.0; h.len()];
        grad.fill(0.0);
        let mut total = 0.0;
        for (law, w) in self.laws {
            if *w > 0.0 {
                total += w * law.eval_grad_mixture(self.n, self.d, h, &mut g)?;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += w * b);
            }
        }
        Ok(total)
    }
}

fn check_laws(laws: &[(LawParams, f64)]) -> Result<Vec<String>> {
    let (first, _) = laws.first().ok_or_else(|| Error::InvalidConfig("no laws to optimize".into()))?;
    let names = first.domain_names().to_vec();
    for (law, w) in laws {
        law.check_domains(&names)?;
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::InvalidConfig(format!("law weight {w} must be nonnegative")));
        }
    }
    if !(laws.iter().map(|(_, w)| w).sum::<f64>() > 0.0) {
        return Err(Error::InvalidConfig("law weights must have a positive sum".into()));
    }
    Ok(names)
}

fn normalize(h: &mut [f64]) {
    let total: f64 = h.iter().sum();
    for x in h.iter_mut() {
        *x /= total;
        if *x == 0.0 {
            *x = f64::MIN_POSITIVE;
        }
    }
}

/// Sets weights below `floor` to `floor` and rescales the rest to keep the sum at one.
fn apply_floor(h: &mut [f64], floor: f64) {
    let mut fixed = vec![false; h.len()];
    loop {
        let mut changed = false;
        for (x, f) in h.iter_mut().zip(fixed.iter_mut()) {
            if !*f && *x < floor {
                *x = floor;
                *f = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let floored = fixed.iter().filter(|f| **f).count() as f64 * floor;
        let free: f64 = h.iter().zip(&fixed).filter(|(_, f)| !**f).map(|(x, _)| x).sum();
        if free > 0.0 {
            let scale = (1.0 - floored) / free;
            h.iter_mut().zip(&fixed).filter(|(_, f)| !**f).for_each(|(x, _)| *x *= scale);
        }
    }
}

/// Minimizes `Σ w_i L_i(N, D, h)` over the simplex by exponentiated-gradient steps.
///
/// The law weights are normalized to sum to one before descending, so only their ratios affect
/// the iterates; `objective_value` is reported with the weights as given.
/// Each step is `h ← h·exp(−η g) / Σ h·exp(−η g)`. A step that would raise the objective is
/// retried with half the step size, up to [`MAX_HALVINGS`] times; if none succeeds the current
/// iterate is returned as stationary. Weights below [`SNAP_THRESHOLD`] are reported as zero and
/// `min_weight` flooring happens after convergence.
pub fn mirror_descent(laws: &[(LawParams, f64)], n: f64, d: f64, config: &OptimizeConfig) -> Result<MixtureReport> {
    let names = check_laws(laws)?;
    let k = names.len();
    if !(config.eta > 0.0 && config.eta.is_finite()) || !(config.tol > 0.0) {
        return Err(Error::InvalidConfig("eta and tol must be positive".into()));
    }
    if !(config.min_weight >= 0.0) || config.min_weight * k as f64 >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "min_weight {} is infeasible for {k} domains",
            config.min_weight
        )));
    }
    let mut h = match &config.h0 {
        Some(h0) => MixtureVector::new(h0.clone(), names.clone())?.into_weights(),
        None => vec![1.0 / k as f64; k],
    };
    if h.iter().any(|x| *x <= 0.0) {
        return Err(Error::InvalidMixture("mirror descent needs a strictly interior start".into()));
    }
    let total_weight: f64 = laws.iter().map(|(_, w)| w).sum();
    let normalized: Vec<(LawParams, f64)> = laws.iter().map(|(law, w)| (law.clone(), w / total_weight)).collect();
    let objective = Objective { laws: &normalized, n, d };
    let mut grad = vec![0.0; k];
    let mut value = objective.value_grad(&h, &mut grad)?;
    let mut trajectory = config.record_trajectory.then(|| vec![h.clone()]);
    let mut halvings = 0;
    let mut converged = false;
    let mut n_iter = 0;

    while n_iter < config.max_iter {
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::OptimizationDiverged(format!("objective {value} at iteration {n_iter}")));
        }
        let g_min = grad.iter().copied().fold(f64::INFINITY, f64::min);
        let mut eta = config.eta;
        let mut accepted = None;
        for attempt in 0..=MAX_HALVINGS {
            let mut next: Vec<f64> = h.iter().zip(&grad).map(|(x, g)| x * (-eta * (g - g_min)).exp()).collect();
            normalize(&mut next);
            match objective.value(&next) {
                Ok(v) if v <= value => {
                    halvings += attempt;
                    accepted = Some(next);
                    break;
                }
                _ => eta *= 0.5,
            }
        }
        let Some(next) = accepted else {
            halvings += MAX_HALVINGS;
            converged = true;
            break;
        };
        n_iter += 1;
        let step = h.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        h = next;
        value = objective.value_grad(&h, &mut grad)?;
        if let Some(t) = trajectory.as_mut() {
            t.push(h.clone());
        }
        if step < config.tol {
            converged = true;
            break;
        }
    }

    let mut reported = h.clone();
    if reported.iter().any(|x| *x < SNAP_THRESHOLD) {
        reported.iter_mut().filter(|x| **x < SNAP_THRESHOLD).for_each(|x| *x = 0.0);
        let total: f64 = reported.iter().sum();
        reported.iter_mut().for_each(|x| *x /= total);
    }
    let flooring_applied = config.min_weight > 0.0;
    if flooring_applied {
        apply_floor(&mut reported, config.min_weight);
    }
    let objective_value = total_weight * objective.value(&reported).unwrap_or(value);
    let to_mixture = |w: Vec<f64>| MixtureVector::new(w, names.clone());
    Ok(MixtureReport {
        h_star: to_mixture(reported)?,
        objective_value,
        n_iter,
        trajectory: trajectory.map(|t| t.into_iter().map(to_mixture).collect::<Result<Vec<_>>>()).transpose()?,
        flooring_applied,
        converged,
        halvings,
    })
}

fn weighted_laws(laws: &IndexMap<String, LawParams>, w: &TargetWeights) -> Result<Vec<(LawParams, f64)>> {
    w.entries()
        .iter()
        .map(|(target, weight)| {
            let law = laws
                .get(target)
                .ok_or_else(|| Error::DomainMismatch(format!("no law for target `{target}`")))?;
            Ok((law.clone(), *weight))
        })
        .collect()
}

/// Optimal mixture for each target optimized alone.
pub fn corner_profile(
    laws: &IndexMap<String, LawParams>,
    n: f64,
    d: f64,
    config: &OptimizeConfig,
) -> Result<IndexMap<String, MixtureReport>> {
    let single: Vec<&LawParams> = laws.values().collect();
    let reports: Vec<Result<MixtureReport>> =
        single.par_iter().map(|law| mirror_descent(&[((*law).clone(), 1.0)], n, d, config)).collect();
    laws.keys().cloned().zip(reports).map(|(t, r)| Ok((t, r?))).collect()
}

/// `h*(w)` for one target-weight vector and its distance to `w` read as a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRow {
    pub w: TargetWeights,
    pub h_star: MixtureVector,
    pub js: f64,
    pub is_fixed_point: bool,
}

/// Evaluates the map `w ↦ h*(w)` on `grid` and flags its fixed points.
///
/// Targets must be training domains so that `w` can be compared with `h*(w)`.
pub fn fixed_point_scan(
    laws: &IndexMap<String, LawParams>,
    n: f64,
    d: f64,
    grid: &[TargetWeights],
    config: &OptimizeConfig,
) -> Result<Vec<FixedPointRow>> {
    grid.par_iter()
        .map(|w| {
            let weighted = weighted_laws(laws, w)?;
            let report = mirror_descent(&weighted, n, d, config)?;
            let as_mixture = w.as_mixture(report.h_star.names())?;
            let js = js_distance_weights(as_mixture.weights(), report.h_star.weights());
            Ok(FixedPointRow { w: w.clone(), h_star: report.h_star, js, is_fixed_point: js < FIXED_POINT_JS })
        })
        .collect()
}

/// `h*(N_t, D_t)` along a compute schedule with strictly increasing `N·D`.
pub fn asymptote_trace(
    laws: &IndexMap<String, LawParams>,
    w: &TargetWeights,
    schedule: &[(f64, f64)],
    config: &OptimizeConfig,
) -> Result<Vec<MixtureReport>> {
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("schedule is empty".into()));
    }
    if schedule.windows(2).any(|p| p[1].0 * p[1].1 <= p[0].0 * p[0].1) {
        return Err(Error::InvalidConfig("schedule must be strictly increasing in compute".into()));
    }
    let weighted = weighted_laws(laws, w)?;
    schedule.par_iter().map(|&(n, d)| mirror_descent(&weighted, n, d, config)).collect()
}

/// Optimal mixture of the `N, D → ∞` limit of each law.
pub fn asymptotic_optimum(
    laws: &IndexMap<String, LawParams>,
    w: &TargetWeights,
    config: &OptimizeConfig,
) -> Result<MixtureReport> {
    let limits = weighted_laws(laws, w)?
        .into_iter()
        .map(|(law, weight)| Ok((law.asymptotic_law()?, weight)))
        .collect::<Result<Vec<_>>>()?;
    mirror_descent(&limits, 1.0, 1.0, config)
}

#[cfg(test)]
mod tests;
