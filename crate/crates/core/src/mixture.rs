//! Mixtures on the probability simplex, run records and compute accounting.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Invariant tolerance on the weight sum of a stored mixture.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Inputs further than this from summing to one are rejected rather than renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Domain weights `h`: a point on the k-simplex with one label per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureVector {
    weights: Vec<f64>,
    names: Vec<String>,
}

impl MixtureVector {
    pub fn new(weights: Vec<f64>, names: Vec<String>) -> Result<Self> {
        validate_mixture(&weights, &names)
    }

    /// Uniform weights over the given domains.
    pub fn uniform(names: Vec<String>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::InvalidMixture("mixture needs at least one domain".into()));
        }
        validate_mixture(&vec![1.0 / k as f64; k], &names)
    }

    /// Vertex `e_i` of the simplex.
    pub fn vertex(names: Vec<String>, index: usize) -> Result<Self> {
        let mut w = vec![0.0; names.len()];
        if index >= w.len() {
            return Err(Error::InvalidMixture(format!(
                "vertex index {index} out of range for k={}",
                w.len()
            )));
        }
        w[index] = 1.0;
        validate_mixture(&w, &names)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.weights[i])
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Checks and normalizes raw weights into a [`MixtureVector`].
///
/// Sums within [`SUM_TOLERANCE`] of one are kept bit-for-bit, so validation is idempotent;
/// sums within [`RENORMALIZE_TOLERANCE`] are divided through by the sum.
pub fn validate_mixture(raw_weights: &[f64], names: &[String]) -> Result<MixtureVector> {
    if raw_weights.is_empty() {
        return Err(Error::InvalidMixture("mixture needs at least one domain".into()));
    }
    if raw_weights.len() != names.len() {
        return Err(Error::InvalidMixture(format!(
            "{} weights for {} domain names",
            raw_weights.len(),
            names.len()
        )));
    }
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidMixture(format!("duplicate domain name `{name}`")));
        }
    }
    for (w, name) in raw_weights.iter().zip(names) {
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::InvalidMixture(format!("weight {w} for `{name}` is not a nonnegative number")));
        }
    }
    let sum: f64 = raw_weights.iter().sum();
    let deviation = (sum - 1.0).abs();
    if deviation > RENORMALIZE_TOLERANCE {
        return Err(Error::InvalidMixture(format!("weights sum to {sum}, expected 1")));
    }
    let weights = if deviation <= SUM_TOLERANCE {
        raw_weights.to_vec()
    } else {
        raw_weights.iter().map(|w| w / sum).collect()
    };
    Ok(MixtureVector { weights, names: names.to_vec() })
}

/// One observation: target-domain loss of a model with `model_params` parameters after
/// `tokens` training tokens on `mixture`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub model_params: u64,
    pub tokens: u64,
    pub mixture: MixtureVector,
    pub target: String,
    pub loss: f64,
}

impl RunRecord {
    pub fn new(
        run_id: impl Into<String>,
        model_params: u64,
        tokens: u64,
        mixture: MixtureVector,
        target: impl Into<String>,
        loss: f64,
    ) -> Result<Self> {
        let run_id = run_id.into();
        if model_params == 0 || tokens == 0 {
            return Err(Error::InvalidObservation(format!(
                "run `{run_id}`: model_params and tokens must be positive"
            )));
        }
        if !(loss.is_finite() && loss > 0.0) {
            return Err(Error::InvalidObservation(format!("run `{run_id}`: loss {loss} must be positive")));
        }
        Ok(RunRecord { run_id, model_params, tokens, mixture, target: target.into(), loss })
    }

    pub fn flops(&self) -> f64 {
        flops(self.model_params, self.tokens)
    }
}

/// A collection of run records sharing one ordered set of training domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<RunRecord>,
    domain_names: Vec<String>,
}

impl Dataset {
    pub fn new(domain_names: Vec<String>, records: Vec<RunRecord>) -> Result<Self> {
        if domain_names.is_empty() && !records.is_empty() {
            return Err(Error::DomainMismatch("records need at least one domain".into()));
        }
        for r in &records {
            if r.mixture.names() != domain_names.as_slice() {
                return Err(Error::DomainMismatch(format!(
                    "run `{}` has domains {:?}, dataset has {:?}",
                    r.run_id,
                    r.mixture.names(),
                    domain_names
                )));
            }
        }
        Ok(Dataset { records, domain_names })
    }

    pub fn empty(domain_names: Vec<String>) -> Result<Self> {
        Dataset::new(domain_names, Vec::new())
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn k(&self) -> usize {
        self.domain_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Target names in order of first appearance.
    pub fn targets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.target) {
                out.push(r.target.clone());
            }
        }
        out
    }

    pub fn for_target<'a>(&'a self, target: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.target == target)
    }

    /// Distinct mixtures in order of first appearance (exact weight equality).
    pub fn distinct_mixtures(&self) -> Vec<MixtureVector> {
        let mut out: Vec<MixtureVector> = Vec::new();
        for r in &self.records {
            if !out.iter().any(|m| m.weights() == r.mixture.weights()) {
                out.push(r.mixture.clone());
            }
        }
        out
    }

    /// Keeps the records for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&RunRecord) -> bool) -> Dataset {
        Dataset {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            domain_names: self.domain_names.clone(),
        }
    }

    /// Sorts records by run id, then tokens, then target (the canonical file order).
    pub fn sort_canonical(&mut self) {
        self.records.sort_by(|a, b| {
            a.run_id
                .cmp(&b.run_id)
                .then(a.tokens.cmp(&b.tokens))
                .then(a.target.cmp(&b.target))
        });
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records
    }
}

/// Importance weights over target domains, normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetWeights {
    entries: Vec<(String, f64)>,
}

impl TargetWeights {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, w) in &entries {
            if !seen.insert(name.clone()) {
                return Err(Error::InvalidConfig(format!("duplicate target `{name}`")));
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidConfig(format!("target weight {w} for `{name}` must be nonnegative")));
            }
        }
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::InvalidConfig("target weights need a strictly positive entry".into()));
        }
        Ok(TargetWeights { entries: entries.into_iter().map(|(n, w)| (n, w / total)).collect() })
    }

    pub fn uniform(names: &[String]) -> Result<Self> {
        TargetWeights::new(names.iter().map(|n| (n.clone(), 1.0)).collect())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> f64 {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, w)| *w).unwrap_or(0.0)
    }

    /// Reads the weights as a mixture over `domain_names`; every target must be a domain.
    pub fn as_mixture(&self, domain_names: &[String]) -> Result<MixtureVector> {
        for (name, _) in &self.entries {
            if !domain_names.contains(name) {
                return Err(Error::DomainMismatch(format!("target `{name}` is not a training domain")));
            }
        }
        let w: Vec<f64> = domain_names.iter().map(|n| self.get(n)).collect();
        let sum: f64 = w.iter().sum();
        validate_mixture(&w.iter().map(|x| x / sum).collect::<Vec<_>>(), domain_names)
    }
}

/// Training compute `6·N·D`.
pub fn flops(model_params: u64, tokens: u64) -> f64 {
    match (model_params as u128).checked_mul(tokens as u128).and_then(|p| p.checked_mul(6)) {
        Some(exact) => exact as f64,
        None => 6.0 * model_params as f64 * tokens as f64,
    }
}

/// Jensen-Shannon distance (natural log) between two mixtures over the same domains.
pub fn js_distance(a: &MixtureVector, b: &MixtureVector) -> Result<f64> {
    if a.names() != b.names() {
        return Err(Error::DomainMismatch(format!("{:?} vs {:?}", a.names(), b.names())));
    }
    Ok(js_distance_weights(a.weights(), b.weights()))
}

pub(crate) fn js_distance_weights(a: &[f64], b: &[f64]) -> f64 {
    let mut divergence = 0.0;
    for (&p, &q) in a.iter().zip(b) {
        let m = 0.5 * (p + q);
        let term = |x: f64| if x > 0.0 { x * (x / m).ln() } else { 0.0 };
        divergence += 0.5 * (term(p) + term(q));
    }
    divergence.max(0.0).sqrt()
}

/// Default labels `d0, d1, …` for synthetic designs.
pub fn default_domain_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("d{i}")).collect()
}
