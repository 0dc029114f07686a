//! Robust fitting of law families: Huber objective, L-BFGS, basin-hopping, random starts.

mod basin;
mod huber;
mod init;
mod lbfgs;
mod objective;

pub use basin::{basin_hop, BasinHopConfig, BasinHopOutcome};
pub use huber::{huber, huber_derivative};
pub use init::{random_init, sample_start, EXPONENT_HIGH, EXPONENT_LOW, LOG_HIGH, LOG_LOW, RAW_SPAN};
pub use lbfgs::{lbfgs_minimize, LocalMinimum};
pub use objective::{fit_objective, FitProblem};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laws::{Family, LawParams};
use crate::mixture::Dataset;
use crate::rng::{substream, Stream};

/// Fresh draws allowed per restart when the sampled start is not finite.
const INIT_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Huber threshold.
    pub delta: f64,
    pub n_restarts: usize,
    /// Basin-hopping iterations per restart.
    pub n_hops: usize,
    pub hop_step: f64,
    pub hop_temperature: f64,
    pub lbfgs_memory: usize,
    pub lbfgs_max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            delta: 1e-3,
            n_restarts: 32,
            n_hops: 100,
            hop_step: 0.5,
            hop_temperature: 1.0,
            lbfgs_memory: 10,
            lbfgs_max_iter: 500,
            grad_tol: 1e-9,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if self.n_restarts == 0 || self.lbfgs_memory == 0 || self.lbfgs_max_iter == 0 {
            return bad("restart, memory and iteration counts must be at least 1");
        }
        if !(self.hop_step > 0.0) || !(self.hop_temperature > 0.0) {
            return bad("hop step and temperature must be positive");
        }
        if !(self.grad_tol > 0.0) {
            return bad("gradient tolerance must be positive");
        }
        Ok(())
    }

    pub fn basin(&self) -> BasinHopConfig {
        BasinHopConfig {
            n_hops: self.n_hops,
            step: self.hop_step,
            temperature: self.hop_temperature,
            memory: self.lbfgs_memory,
            max_iter: self.lbfgs_max_iter,
            grad_tol: self.grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub law: LawParams,
    pub huber_value: f64,
    pub train_mre_percent: f64,
    pub seed: u64,
    pub delta: f64,
    pub n_points: usize,
    /// Chains that produced a finite local minimum.
    pub restarts_used: usize,
    pub hops_used: usize,
    pub lbfgs_calls: usize,
    /// Whether the winning local solve met the gradient tolerance.
    pub converged: bool,
}

/// Mean relative error in percent: `100 · mean |p − o| / o`.
pub fn mre(predictions: &[f64], observations: &[f64]) -> Result<f64> {
    if predictions.len() != observations.len() || predictions.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    let mut total = 0.0;
    for (p, o) in predictions.iter().zip(observations) {
        if !(*o > 0.0) || !o.is_finite() {
            return Err(Error::InvalidObservation(format!("observation {o} is not positive")));
        }
        total += (p - o).abs() / o;
    }
    Ok(100.0 * total / predictions.len() as f64)
}

/// MRE (percent) of `law` on every record of `target` in `data`.
pub fn evaluate_mre(law: &LawParams, data: &Dataset, target: &str) -> Result<f64> {
    law.check_domains(data.domain_names())?;
    let mut pred = Vec::new();
    let mut obs = Vec::new();
    for r in data.for_target(target) {
        pred.push(law.eval(r.model_params as f64, r.tokens as f64, r.mixture.weights())?);
        obs.push(r.loss);
    }
    if obs.is_empty() {
        return Err(Error::EmptyDataset(target.to_string()));
    }
    mre(&pred, &obs)
}

/// Fits `family` to the records of `target` by multi-start basin-hopping.
pub fn fit_law(family: Family, data: &Dataset, target: &str, config: &FitConfig) -> Result<FitResult> {
    fit_law_warm(family, data, target, config, &[])
}

fn finite_start<R: Rng>(problem: &FitProblem, k: usize, rng: &mut R) -> Option<Vec<f64>> {
    (0..INIT_ATTEMPTS)
        .map(|_| sample_start(problem.family(), k, problem.min_loss(), rng))
        .find(|z| problem.value(z).is_finite())
}

/// As [`fit_law`], with extra basin-hopping chains started from each law in `warm`.
///
/// The result is never worse than the best warm start, so fitting the joint law warm-started
/// from an embedded additive fit cannot end with a higher Huber value than that fit.
pub fn fit_law_warm(
    family: Family,
    data: &Dataset,
    target: &str,
    config: &FitConfig,
    warm: &[LawParams],
) -> Result<FitResult> {
    config.validate()?;
    let problem = FitProblem::new(family, data, target, config.delta)?;
    let dim = problem.dim();
    if problem.n_points() < dim {
        return Err(Error::InsufficientData { have: problem.n_points(), need: dim });
    }
    if problem.n_points() < 3 * dim {
        log::warn!(
            "fitting {} parameters of the {} law to only {} records",
            dim,
            family.name(),
            problem.n_points()
        );
    }
    let mut warm_z = Vec::with_capacity(warm.len());
    for law in warm {
        if law.family() != family {
            return Err(Error::InvalidConfig(format!(
                "warm start of family {} for a {} fit",
                law.family().name(),
                family.name()
            )));
        }
        law.check_domains(data.domain_names())?;
        warm_z.push(law.to_internal());
    }

    let k = data.k();
    let basin = config.basin();
    let objective = |z: &[f64], g: &mut [f64]| problem.value_grad(z, g);
    let n_chains = config.n_restarts + warm_z.len();
    let outcomes: Vec<Option<BasinHopOutcome>> = (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let (mut rng, start) = if i < config.n_restarts {
                let mut rng = substream(config.seed, "restart", i as u64);
                let start = finite_start(&problem, k, &mut rng)?;
                (rng, start)
            } else {
                let j = i - config.n_restarts;
                (substream(config.seed, "warm", j as u64), warm_z[j].clone())
            };
            basin_hop(&objective, &start, &basin, &mut rng).ok()
        })
        .collect();

    let mut best: Option<&BasinHopOutcome> = None;
    for o in outcomes.iter().flatten() {
        if best.is_none_or(|b| o.value < b.value) {
            best = Some(o);
        }
    }
    let best = best.ok_or(Error::FitFailed)?;
    let law = problem.law(&best.z)?;
    let (pred, obs) = problem.predictions(&law)?;
    Ok(FitResult {
        law,
        huber_value: best.value,
        train_mre_percent: mre(&pred, &obs)?,
        seed: config.seed,
        delta: config.delta,
        n_points: problem.n_points(),
        restarts_used: outcomes.iter().flatten().count(),
        hops_used: outcomes.iter().flatten().map(|o| o.hops).sum(),
        lbfgs_calls: outcomes.iter().flatten().map(|o| o.lbfgs_calls).sum(),
        converged: best.converged,
    })
}

/// Best objective value after each local solve of independent random-restart L-BFGS.
///
/// This is the baseline that basin-hopping is compared against: `n_calls` starts drawn from
/// the same box as [`random_init`], each minimized once.
pub fn random_restart_trace(problem: &FitProblem, config: &FitConfig, n_calls: usize, rng: &mut Stream) -> Vec<f64> {
    let k = problem.domain_names().len();
    let objective = |z: &[f64], g: &mut [f64]| problem.value_grad(z, g);
    let mut best = f64::INFINITY;
    (0..n_calls)
        .map(|_| {
            if let Some(z0) = finite_start(problem, k, rng) {
                if let Ok(local) =
                    lbfgs_minimize(&objective, &z0, config.lbfgs_memory, config.lbfgs_max_iter, config.grad_tol)
                {
                    best = best.min(local.value);
                }
            }
            best
        })
        .collect()
}

/// Best objective value after each local solve of one basin-hopping chain from a random start.
pub fn basin_hop_trace(problem: &FitProblem, config: &FitConfig, n_calls: usize, rng: &mut Stream) -> Vec<f64> {
    let k = problem.domain_names().len();
    let objective = |z: &[f64], g: &mut [f64]| problem.value_grad(z, g);
    let basin = BasinHopConfig { n_hops: n_calls.saturating_sub(1), ..config.basin() };
    let trace = finite_start(problem, k, rng)
        .and_then(|z0| basin_hop(&objective, &z0, &basin, rng).ok())
        .map(|o| o.best_trace)
        .unwrap_or_default();
    let mut trace = trace;
    trace.resize(n_calls, trace.last().copied().unwrap_or(f64::INFINITY));
    trace
}

#[cfg(test)]
mod tests;
