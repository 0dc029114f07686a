//! JSON documents describing synthetic experiments.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::law::{params_from_value, params_to_value};
use crate::error::{Error, Result};
use crate::mixture::MixtureVector;
use crate::rng::substream;
use crate::synthlab::{sample_mixtures, simplex_grid, DesignSpec, NoiseModel, Spacing};

/// Where a design's training mixtures come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MixtureSource {
    Grid { step: f64, min_weight: f64 },
    /// Uniform draws from the restricted simplex, seeded by the design seed.
    Sampled { n: usize, min_weight: f64 },
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthLaw {
    pub family: String,
    pub params: Value,
}

/// On-disk form of a [`DesignSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDocument {
    pub domain_names: Vec<String>,
    pub sizes: Spacing,
    pub token_checkpoints: Spacing,
    pub mixtures: MixtureSource,
    pub truth: IndexMap<String, TruthLaw>,
    #[serde(default = "no_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

fn no_noise() -> NoiseModel {
    NoiseModel::None
}

impl DesignDocument {
    pub fn resolve(&self) -> Result<DesignSpec> {
        let names = &self.domain_names;
        let mixtures = match &self.mixtures {
            MixtureSource::Grid { step, min_weight } => simplex_grid(names, *step, *min_weight)?,
            MixtureSource::Sampled { n, min_weight } => {
                sample_mixtures(names, *n, *min_weight, &mut substream(self.seed, "mixtures", 0))?
            }
            MixtureSource::Explicit(list) => {
                list.iter().map(|w| MixtureVector::new(w.clone(), names.clone())).collect::<Result<_>>()?
            }
        };
        let truth = self
            .truth
            .iter()
            .map(|(target, t)| Ok((target.clone(), params_from_value(&t.family, names, target, &t.params)?)))
            .collect::<Result<IndexMap<_, _>>>()?;
        let spec = DesignSpec {
            domain_names: names.clone(),
            sizes: self.sizes.values()?,
            token_checkpoints: self.token_checkpoints.values()?,
            mixtures,
            truth,
            noise: self.noise,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Document listing every value of `spec` explicitly.
    pub fn from_spec(spec: &DesignSpec) -> DesignDocument {
        DesignDocument {
            domain_names: spec.domain_names.clone(),
            sizes: Spacing::Explicit(spec.sizes.clone()),
            token_checkpoints: Spacing::Explicit(spec.token_checkpoints.clone()),
            mixtures: MixtureSource::Explicit(spec.mixtures.iter().map(|m| m.weights().to_vec()).collect()),
            truth: spec
                .truth
                .iter()
                .map(|(t, law)| {
                    (t.clone(), TruthLaw { family: law.family().name().to_string(), params: params_to_value(law) })
                })
                .collect(),
            noise: spec.noise,
            seed: spec.seed,
        }
    }
}

pub fn design_from_str(text: &str) -> Result<DesignSpec> {
    let doc: DesignDocument = serde_json::from_str(text).map_err(|e| Error::ParseError {
        line: e.line(),
        message: e.to_string(),
    })?;
    doc.resolve()
}

pub fn design_to_string(spec: &DesignSpec) -> String {
    let mut s = serde_json::to_string_pretty(&DesignDocument::from_spec(spec)).expect("designs always serialize");
    s.push('\n');
    s
}

pub fn read_design(path: &Path) -> Result<DesignSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    design_from_str(&text)
}

pub fn write_design(spec: &DesignSpec, path: &Path) -> Result<()> {
    fs::write(path, design_to_string(spec)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
