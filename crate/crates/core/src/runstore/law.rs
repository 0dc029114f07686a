//! Self-describing JSON artifacts for fitted laws.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::laws::{Family, FamilyParams, LawParams, YeParams, YeVariant};

pub const SCHEMA_VERSION: u64 = 1;

/// Provenance of a fitted law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    pub huber: f64,
    pub delta: f64,
    pub seed: u64,
    pub n_points: usize,
    pub train_mre_percent: f64,
    pub tool_version: String,
}

const FIT_META_FIELDS: [&str; 6] = ["huber", "delta", "seed", "n_points", "train_mre_percent", "tool_version"];

/// A law, the target it predicts, and optionally how it was fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct LawArtifact {
    pub law: LawParams,
    pub target: String,
    pub fit_meta: Option<FitMeta>,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::SchemaError(msg.into())
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("parameter structs always serialize")
}

/// The family-specific parameter map of `law`.
pub fn params_to_value(law: &LawParams) -> Value {
    match law.params() {
        FamilyParams::Chinchilla(p) => to_value(p),
        FamilyParams::Simple(p) => to_value(p),
        FamilyParams::Additive(p) => to_value(p),
        FamilyParams::Joint(p) => to_value(p),
        FamilyParams::Full(p) => to_value(p),
        FamilyParams::Ge(p) => to_value(p),
        FamilyParams::AdditiveFixedBudget(p) => to_value(p),
        FamilyParams::AdditiveFixedN(p) => to_value(p),
        FamilyParams::Ye(p) => {
            let c = if p.variant == YeVariant::M1 { json!(p.c) } else { json!(p.c[0]) };
            json!({ "E": p.e, "C": c, "gamma": p.gamma })
        }
    }
}

fn decode<T: DeserializeOwned>(family: Family, value: &Value) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|e| schema(format!("params of a {} law: {e}", family.name())))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct YeRaw {
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "C")]
    c: Value,
    gamma: Vec<f64>,
}

/// Decodes a parameter map for the family named `family` (the Ge law is bound to `target`).
pub fn params_from_value(family: &str, domain_names: &[String], target: &str, value: &Value) -> Result<LawParams> {
    let family = Family::parse(family, domain_names, target).map_err(|e| schema(e.to_string()))?;
    let params = match family {
        Family::Chinchilla => FamilyParams::Chinchilla(decode(family, value)?),
        Family::Simple => FamilyParams::Simple(decode(family, value)?),
        Family::Additive => FamilyParams::Additive(decode(family, value)?),
        Family::Joint => FamilyParams::Joint(decode(family, value)?),
        Family::Full => FamilyParams::Full(decode(family, value)?),
        Family::AdditiveFixedBudget => FamilyParams::AdditiveFixedBudget(decode(family, value)?),
        Family::AdditiveFixedN => FamilyParams::AdditiveFixedN(decode(family, value)?),
        Family::Ge { domain_index } => {
            let p: crate::laws::GeParams = decode(family, value)?;
            if p.domain_index != domain_index {
                return Err(schema(format!(
                    "Ge law for target `{target}` must have domain_index {domain_index}, found {}",
                    p.domain_index
                )));
            }
            FamilyParams::Ge(p)
        }
        Family::Ye(variant) => {
            let raw: YeRaw = decode(family, value)?;
            let c = match (variant, &raw.c) {
                (YeVariant::M1, Value::Array(_)) => decode::<Vec<f64>>(family, &raw.c)?,
                (YeVariant::M1, _) => return Err(schema("params.C of a ye-m1 law must be a list")),
                (_, Value::Number(_)) => vec![decode::<f64>(family, &raw.c)?],
                _ => return Err(schema(format!("params.C of a {} law must be a number", family.name()))),
            };
            FamilyParams::Ye(YeParams { variant, e: raw.e, c, gamma: raw.gamma })
        }
    };
    LawParams::new(domain_names.to_vec(), params).map_err(|e| schema(format!("params: {e}")))
}

/// Serializes an artifact as pretty-printed JSON.
pub fn law_to_string(artifact: &LawArtifact) -> String {
    let law = &artifact.law;
    let mut doc = Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("family".into(), json!(law.family().name()));
    doc.insert("k".into(), json!(law.k()));
    doc.insert("domain_names".into(), json!(law.domain_names()));
    doc.insert("target".into(), json!(artifact.target));
    doc.insert("params".into(), params_to_value(law));
    if let Some(meta) = &artifact.fit_meta {
        doc.insert("fit_meta".into(), to_value(meta));
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).expect("artifacts always serialize");
    s.push('\n');
    s
}

fn field<'a>(doc: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    doc.get(name).ok_or_else(|| schema(format!("missing field `{name}`")))
}

/// Parses and validates an artifact.
pub fn law_from_str(text: &str) -> Result<LawArtifact> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::ParseError {
        line: e.line(),
        message: e.to_string(),
    })?;
    let doc = value.as_object().ok_or_else(|| schema("artifact must be a JSON object"))?;
    const KNOWN: [&str; 7] = ["schema_version", "family", "k", "domain_names", "target", "params", "fit_meta"];
    if let Some(extra) = doc.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(schema(format!("unknown field `{extra}`")));
    }
    let version = field(doc, "schema_version")?.as_u64().ok_or_else(|| schema("`schema_version` must be an integer"))?;
    if version != SCHEMA_VERSION {
        return Err(schema(format!("unsupported schema_version {version}, expected {SCHEMA_VERSION}")));
    }
    let family = field(doc, "family")?.as_str().ok_or_else(|| schema("`family` must be a string"))?;
    let k = field(doc, "k")?.as_u64().ok_or_else(|| schema("`k` must be an integer"))? as usize;
    let domain_names: Vec<String> = serde_json::from_value(field(doc, "domain_names")?.clone())
        .map_err(|_| schema("`domain_names` must be a list of strings"))?;
    if domain_names.len() != k {
        return Err(schema(format!("`k` is {k} but {} domain names are listed", domain_names.len())));
    }
    let target = field(doc, "target")?.as_str().ok_or_else(|| schema("`target` must be a string"))?.to_string();
    let law = params_from_value(family, &domain_names, &target, field(doc, "params")?)?;
    let fit_meta = match doc.get("fit_meta") {
        None => None,
        Some(meta) => {
            let obj = meta.as_object().ok_or_else(|| schema("`fit_meta` must be an object"))?;
            if let Some(missing) = FIT_META_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
                return Err(schema(format!("missing field `fit_meta.{missing}`")));
            }
            let meta: FitMeta =
                serde_json::from_value(meta.clone()).map_err(|e| schema(format!("fit_meta: {e}")))?;
            if !(meta.huber >= 0.0) {
                return Err(schema("`fit_meta.huber` must be nonnegative"));
            }
            Some(meta)
        }
    };
    Ok(LawArtifact { law, target, fit_meta })
}

pub fn write_law(artifact: &LawArtifact, path: &Path) -> Result<()> {
    fs::write(path, law_to_string(artifact)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_law(path: &Path) -> Result<LawArtifact> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    law_from_str(&text)
}
