//! Run files (JSONL and CSV), law artifacts and design documents.

mod design;
mod law;

pub use design::{design_from_str, design_to_string, read_design, write_design, DesignDocument, MixtureSource, TruthLaw};
pub use law::{
    law_from_str, law_to_string, params_from_value, params_to_value, read_law, write_law, FitMeta, LawArtifact,
    SCHEMA_VERSION,
};

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mixture::{validate_mixture, Dataset, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunFormat {
    Jsonl,
    Csv,
}

impl RunFormat {
    /// Format implied by the file extension (`.csv` or `.jsonl`/`.json`).
    pub fn from_path(path: &Path) -> Result<RunFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(RunFormat::Csv),
            Some("jsonl") | Some("json") => Ok(RunFormat::Jsonl),
            _ => Err(Error::InvalidConfig(format!("cannot infer run-file format of {}", path.display()))),
        }
    }
}

/// Shortest round-trip decimal form of `x`.
pub fn format_float(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

fn record_error(run_id: &str, e: Error) -> Error {
    match e {
        Error::InvalidMixture(m) => Error::InvalidMixture(format!("run `{run_id}`: {m}")),
        other => other,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    run_id: String,
    model_params: u64,
    tokens: u64,
    mixture: IndexMap<String, f64>,
    target: String,
    loss: f64,
}

fn parse_jsonl(text: &str) -> Result<Dataset> {
    let mut names: Option<Vec<String>> = None;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonRecord = serde_json::from_str(line)
            .map_err(|e| Error::ParseError { line: line_no, message: e.to_string() })?;
        let order = names.get_or_insert_with(|| raw.mixture.keys().cloned().collect());
        if raw.mixture.len() != order.len() || order.iter().any(|n| !raw.mixture.contains_key(n)) {
            return Err(Error::DomainMismatch(format!(
                "line {line_no}, run `{}`: domains {:?}, expected {:?}",
                raw.run_id,
                raw.mixture.keys().collect::<Vec<_>>(),
                order
            )));
        }
        let weights: Vec<f64> = order.iter().map(|n| raw.mixture[n]).collect();
        let mixture = validate_mixture(&weights, order).map_err(|e| record_error(&raw.run_id, e))?;
        let record = RunRecord::new(raw.run_id.clone(), raw.model_params, raw.tokens, mixture, raw.target, raw.loss)
            .map_err(|e| record_error(&raw.run_id, e))?;
        records.push(record);
    }
    Dataset::new(names.unwrap_or_default(), records)
}

fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::ParseError { line: 1, message: e.to_string() })?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let n = cols.len();
    let bad_header = || Error::ParseError {
        line: 1,
        message: format!("header must be run_id,model_params,tokens,h_<domain>...,target,loss; got {}", cols.join(",")),
    };
    if n < 6 || cols[..3] != ["run_id", "model_params", "tokens"] || cols[n - 2..] != ["target", "loss"] {
        return Err(bad_header());
    }
    let names: Vec<String> = cols[3..n - 2]
        .iter()
        .map(|c| c.strip_prefix("h_").filter(|s| !s.is_empty()).map(str::to_string))
        .collect::<Option<_>>()
        .ok_or_else(bad_header)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or_default();
        let parse_err = |what: &str, value: &str| Error::ParseError { line, message: format!("bad {what} `{value}`") };
        let int = |i: usize, what: &str| field(i).parse::<u64>().map_err(|_| parse_err(what, field(i)));
        let float = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| parse_err(what, field(i)));
        let run_id = field(0).to_string();
        let weights = (3..n - 2).map(|i| float(i, &cols[i])).collect::<Result<Vec<_>>>()?;
        let mixture = validate_mixture(&weights, &names).map_err(|e| record_error(&run_id, e))?;
        let record = RunRecord::new(
            run_id.clone(),
            int(1, "model_params")?,
            int(2, "tokens")?,
            mixture,
            field(n - 2),
            float(n - 1, "loss")?,
        )
        .map_err(|e| record_error(&run_id, e))?;
        records.push(record);
    }
    Dataset::new(names, records)
}

/// Parses run records from text in the given format.
pub fn parse_runs_str(text: &str, format: RunFormat) -> Result<Dataset> {
    match format {
        RunFormat::Jsonl => parse_jsonl(text),
        RunFormat::Csv => parse_csv(text),
    }
}

/// Reads and validates a run file; the format comes from the extension.
pub fn parse_runs(path: &Path) -> Result<Dataset> {
    let format = RunFormat::from_path(path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_runs_str(&text, format)
}

/// Serializes records in canonical order (run id, then tokens, then target).
pub fn format_runs(data: &Dataset, format: RunFormat) -> Result<String> {
    let mut sorted = data.clone();
    sorted.sort_canonical();
    let mut out = String::new();
    match format {
        RunFormat::Jsonl => {
            for r in sorted.records() {
                let mixture: Vec<String> = r
                    .mixture
                    .names()
                    .iter()
                    .zip(r.mixture.weights())
                    .map(|(n, w)| format!("{}:{}", json_string(n), format_float(*w)))
                    .collect();
                out.push_str(&format!(
                    "{{\"run_id\":{},\"model_params\":{},\"tokens\":{},\"mixture\":{{{}}},\"target\":{},\"loss\":{}}}\n",
                    json_string(&r.run_id),
                    r.model_params,
                    r.tokens,
                    mixture.join(","),
                    json_string(&r.target),
                    format_float(r.loss)
                ));
            }
        }
        RunFormat::Csv => {
            let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            let mut header = vec!["run_id".to_string(), "model_params".into(), "tokens".into()];
            header.extend(sorted.domain_names().iter().map(|n| format!("h_{n}")));
            header.extend(["target".to_string(), "loss".into()]);
            let io = |e: csv::Error| Error::Io(e.to_string());
            writer.write_record(&header).map_err(io)?;
            for r in sorted.records() {
                let mut row = vec![r.run_id.clone(), r.model_params.to_string(), r.tokens.to_string()];
                row.extend(r.mixture.weights().iter().map(|w| format_float(*w)));
                row.extend([r.target.clone(), format_float(r.loss)]);
                writer.write_record(&row).map_err(io)?;
            }
            let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
            out = String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    Ok(out)
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Writes records to `path`; the format comes from the extension.
pub fn write_runs(data: &Dataset, path: &Path) -> Result<()> {
    let text = format_runs(data, RunFormat::from_path(path)?)?;
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
