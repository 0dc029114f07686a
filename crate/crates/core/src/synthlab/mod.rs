//! Synthetic ground truth: simplex grids, mixture sampling, noisy run synthesis and studies.

mod study;

pub use study::{compare_fixed_budget, runcount_study, ComparisonRow, RuncountRow, RuncountSetup};

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{Family, LawParams, Transform};
use crate::mixture::{Dataset, MixtureVector, RunRecord};
use crate::rng::substream;

/// Relative slack allowed when checking that a grid step divides 1.
const GRID_TOLERANCE: f64 = 1e-12;

/// Every mixture whose weights are multiples of `step`, at least `min_weight`, summing to 1.
///
/// Points are listed in ascending lexicographic order of their weights.
pub fn simplex_grid(names: &[String], step: f64, min_weight: f64) -> Result<Vec<MixtureVector>> {
    let k = names.len();
    if k == 0 {
        return Err(Error::InvalidMixture("a grid needs at least one domain".into()));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InfeasibleGrid(format!("step {step} must lie in (0, 1]")));
    }
    if !(min_weight >= 0.0) {
        return Err(Error::InfeasibleGrid(format!("minimum weight {min_weight} is negative")));
    }
    let units = (1.0 / step).round();
    if (units * step - 1.0).abs() > GRID_TOLERANCE {
        return Err(Error::InfeasibleGrid(format!("step {step} does not divide 1")));
    }
    let low = (min_weight / step).round();
    if (low * step - min_weight).abs() > GRID_TOLERANCE {
        return Err(Error::InfeasibleGrid(format!("minimum weight {min_weight} is not a multiple of {step}")));
    }
    let (units, low) = (units as usize, low as usize);
    if k * low > units {
        return Err(Error::InfeasibleGrid(format!("{k} domains with minimum weight {min_weight} exceed 1")));
    }
    let mut out = Vec::new();
    let mut parts = vec![0usize; k];
    compositions(&mut parts, 0, units, low, &mut |p| {
        let w: Vec<f64> = p.iter().map(|&u| u as f64 / units as f64).collect();
        out.push(w);
    });
    out.into_iter().map(|w| MixtureVector::new(w, names.to_vec())).collect()
}

fn compositions(parts: &mut [usize], i: usize, remaining: usize, low: usize, emit: &mut impl FnMut(&[usize])) {
    let k = parts.len();
    if i == k - 1 {
        parts[i] = remaining;
        emit(parts);
        return;
    }
    let reserve = low * (k - 1 - i);
    for u in low..=remaining - reserve {
        parts[i] = u;
        compositions(parts, i + 1, remaining - u, low, emit);
    }
}

/// `n` mixtures drawn uniformly from the simplex restricted to weights ≥ `min_weight`.
///
/// Uses the affine map `min_weight + (1 − k·min_weight)·u` with `u` uniform Dirichlet.
pub fn sample_mixtures<R: Rng + ?Sized>(
    names: &[String],
    n: usize,
    min_weight: f64,
    rng: &mut R,
) -> Result<Vec<MixtureVector>> {
    let k = names.len();
    if k == 0 {
        return Err(Error::InvalidMixture("sampling needs at least one domain".into()));
    }
    let free = 1.0 - k as f64 * min_weight;
    if !(min_weight >= 0.0) || !(free > 0.0 || (k == 1 && free >= 0.0)) {
        return Err(Error::InfeasibleGrid(format!("{k} domains with minimum weight {min_weight} exceed 1")));
    }
    (0..n)
        .map(|_| {
            let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = e.iter().sum();
            let w: Vec<f64> = e.iter().map(|x| min_weight + free * x / total).collect();
            let sum: f64 = w.iter().sum();
            MixtureVector::new(w.iter().map(|x| x / sum).collect(), names.to_vec())
        })
        .collect()
}

/// Draws a law with moderate, well-conditioned parameters.
///
/// Positive scales fall in `[0.3, 3]`, constrained exponents in `[0.1, 0.9]` and sign-free
/// parameters in `[-1, 1]`.
pub fn random_law<R: Rng + ?Sized>(family: Family, names: Vec<String>, rng: &mut R) -> LawParams {
    let x: Vec<f64> = family
        .layout(names.len())
        .into_iter()
        .map(|t| match t {
            Transform::Log => rng.random_range(0.3f64.ln()..3f64.ln()).exp(),
            Transform::Exponent => rng.random_range(0.1..0.9),
            Transform::Raw => rng.random_range(-1.0..1.0),
        })
        .collect();
    LawParams::from_natural(family, names, &x).expect("sampled parameters lie inside every family's domain")
}

/// Observation noise applied to synthetic losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    None,
    /// Loss multiplied by `exp(σ·g)`, `g` standard normal.
    MultiplicativeLognormal { sigma: f64 },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::MultiplicativeLognormal { sigma } => *sigma,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::None => Ok(()),
            NoiseModel::MultiplicativeLognormal { sigma } if *sigma > 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::MultiplicativeLognormal { sigma } => {
                Err(Error::InvalidConfig(format!("lognormal noise needs a positive sigma, got {sigma}")))
            }
        }
    }
}

/// Budget values: an explicit list, or `count` points spaced linearly or geometrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spacing {
    Explicit(Vec<u64>),
    Spaced(SpacedRange),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacedRange {
    pub start: u64,
    pub stop: u64,
    pub count: usize,
    pub scale: SpacingScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingScale {
    Linear,
    Log,
}

impl Spacing {
    /// Resolves to a list of positive integers (rounded to nearest).
    pub fn values(&self) -> Result<Vec<u64>> {
        let values = match self {
            Spacing::Explicit(v) => v.clone(),
            Spacing::Spaced(r) => {
                if r.count == 0 || r.start == 0 || r.stop < r.start || (r.count == 1 && r.stop != r.start) {
                    return Err(Error::InvalidConfig(format!("bad spacing {r:?}")));
                }
                let (a, b) = (r.start as f64, r.stop as f64);
                (0..r.count)
                    .map(|i| {
                        let t = if r.count == 1 { 0.0 } else { i as f64 / (r.count - 1) as f64 };
                        let v = match r.scale {
                            SpacingScale::Linear => a + t * (b - a),
                            SpacingScale::Log => (a.ln() + t * (b.ln() - a.ln())).exp(),
                        };
                        v.round() as u64
                    })
                    .collect()
            }
        };
        if values.is_empty() || values.contains(&0) {
            return Err(Error::InvalidConfig("budget lists must be nonempty and positive".into()));
        }
        Ok(values)
    }
}

/// A synthetic experiment: every (size, checkpoint, mixture, target) combination is one record.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub domain_names: Vec<String>,
    pub sizes: Vec<u64>,
    pub token_checkpoints: Vec<u64>,
    pub mixtures: Vec<MixtureVector>,
    /// Ground-truth law per target, in output order.
    pub truth: IndexMap<String, LawParams>,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.sizes.is_empty() || self.token_checkpoints.is_empty() || self.mixtures.is_empty() {
            return Err(Error::InvalidConfig("design needs sizes, checkpoints and mixtures".into()));
        }
        if self.truth.is_empty() {
            return Err(Error::InvalidConfig("design needs at least one target law".into()));
        }
        if self.sizes.contains(&0) || self.token_checkpoints.contains(&0) {
            return Err(Error::InvalidConfig("sizes and checkpoints must be positive".into()));
        }
        for m in &self.mixtures {
            if m.names() != self.domain_names.as_slice() {
                return Err(Error::DomainMismatch(format!("mixture over {:?}", m.names())));
            }
        }
        for law in self.truth.values() {
            law.check_domains(&self.domain_names)?;
        }
        Ok(())
    }
}

/// Model sizes of the standard design: four log-spaced values from 20M to 200M.
pub fn standard_sizes() -> Vec<u64> {
    Spacing::Spaced(SpacedRange { start: 20_000_000, stop: 200_000_000, count: 4, scale: SpacingScale::Log })
        .values()
        .expect("valid spacing")
}

/// Token checkpoints of the standard design: eight log-spaced values from 1B to 100B.
pub fn standard_checkpoints() -> Vec<u64> {
    Spacing::Spaced(SpacedRange {
        start: 1_000_000_000,
        stop: 100_000_000_000,
        count: 8,
        scale: SpacingScale::Log,
    })
    .values()
    .expect("valid spacing")
}

/// Four model sizes, eight token checkpoints and the step-0.1 grid with every weight ≥ 0.1.
pub fn standard_design(truth: IndexMap<String, LawParams>, noise: NoiseModel, seed: u64) -> Result<DesignSpec> {
    let domain_names = truth
        .values()
        .next()
        .ok_or_else(|| Error::InvalidConfig("design needs at least one target law".into()))?
        .domain_names()
        .to_vec();
    let spec = DesignSpec {
        mixtures: simplex_grid(&domain_names, 0.1, 0.1)?,
        domain_names,
        sizes: standard_sizes(),
        token_checkpoints: standard_checkpoints(),
        truth,
        noise,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Synthesizes one record per (target, mixture, size, checkpoint).
///
/// Run ids are `m{mixture:03}-n{size index}`; checkpoints of one run share its id. Noise draws
/// come from a single stream in record order, so the output is bit-identical per seed.
pub fn synth_runs(spec: &DesignSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = substream(spec.seed, "noise", 0);
    let sigma = spec.noise.sigma();
    let mut records = Vec::with_capacity(
        spec.truth.len() * spec.mixtures.len() * spec.sizes.len() * spec.token_checkpoints.len(),
    );
    for (target, law) in &spec.truth {
        for (m, mixture) in spec.mixtures.iter().enumerate() {
            for (si, &n) in spec.sizes.iter().enumerate() {
                for &d in &spec.token_checkpoints {
                    let mut loss = law.eval(n as f64, d as f64, mixture.weights())?;
                    if sigma > 0.0 {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        loss *= (sigma * g).exp();
                    }
                    records.push(RunRecord::new(
                        format!("m{m:03}-n{si}"),
                        n,
                        d,
                        mixture.clone(),
                        target.clone(),
                        loss,
                    )?);
                }
            }
        }
    }
    Dataset::new(spec.domain_names.clone(), records)
}
