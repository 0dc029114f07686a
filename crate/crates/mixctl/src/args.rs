use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

const FAMILIES: [&str; 12] = [
    "chinchilla",
    "simple",
    "additive",
    "joint",
    "full",
    "ye-m1",
    "ye-m2",
    "ye-m3",
    "ye-m4",
    "ge",
    "additive-fixed-nd",
    "additive-fixed-n",
];

/// Fit, evaluate and optimize data-mixture scaling laws.
#[derive(Debug, Parser)]
#[command(name = "mixctl", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a law to run records and write it as a JSON artifact.
    Fit(FitArgs),
    /// Predict the loss of one (N, D, mixture) configuration.
    Predict(PredictArgs),
    /// Mean relative error of fitted laws on a run file.
    Evaluate(EvaluateArgs),
    /// Optimal training mixture for one or more weighted target laws.
    Optimize(OptimizeArgs),
    /// Synthesize run records from a design document.
    Simulate(SimulateArgs),
    /// Analysis tables as CSV.
    #[command(subcommand)]
    Analyze(Analyze),
    /// List the points of a simplex grid.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_parser = FAMILIES)]
    pub law: String,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Artifact of a nested law used as an extra starting point (additive for joint, joint for full).
    #[arg(long)]
    pub warm: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct FitOptions {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    #[arg(long, default_value_t = 100)]
    pub hops: usize,
    /// Huber threshold.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub law: PathBuf,
    /// Model parameters.
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    /// Training tokens.
    #[arg(long, value_parser = parse_count)]
    pub d: u64,
    /// `w1,...,wk` in the artifact's domain order, or `name=w,...`.
    #[arg(long, value_parser = parse_mixture, allow_hyphen_values = true)]
    pub mixture: MixtureArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// One or more law artifacts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub law: Vec<PathBuf>,
    #[arg(long)]
    pub runs: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct DescentOptions {
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Floor applied to every reported weight.
    #[arg(long, default_value_t = 0.0)]
    pub min_weight: f64,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub laws: Vec<PathBuf>,
    /// One weight per law; uniform when absent.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_parser = parse_count)]
    pub d: u64,
    #[command(flatten)]
    pub descent: DescentOptions,
    /// Starting mixture, in the same syntax as `predict --mixture`.
    #[arg(long, value_parser = parse_mixture)]
    pub h0: Option<MixtureArg>,
    /// Write the iterate trajectory to this CSV file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the design's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Analyze {
    /// Optimal mixture of each target optimized alone.
    Corners(CornersArgs),
    /// Map from target weights to optimal mixtures over a simplex grid.
    FixedPoints(FixedPointArgs),
    /// Optimal mixture along a growing compute schedule.
    Asymptotes(AsymptoteArgs),
    /// Held-out error against the number of training mixtures.
    Runcount(RuncountArgs),
    /// Fixed-budget comparison of mixture-only laws.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct CornersArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub laws: Vec<PathBuf>,
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_parser = parse_count)]
    pub d: u64,
    #[command(flatten)]
    pub descent: DescentOptions,
}

#[derive(Debug, Args)]
pub struct FixedPointArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub laws: Vec<PathBuf>,
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_parser = parse_count)]
    pub d: u64,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long = "min", default_value_t = 0.0)]
    pub min: f64,
    #[command(flatten)]
    pub descent: DescentOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Growth {
    Both,
    N,
    D,
}

#[derive(Debug, Args)]
pub struct AsymptoteArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub laws: Vec<PathBuf>,
    /// One weight per law; uniform when absent.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Starting model size.
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    /// Starting token count.
    #[arg(long, value_parser = parse_count)]
    pub d: u64,
    /// Growth factor per step.
    #[arg(long, default_value_t = 10.0)]
    pub factor: f64,
    #[arg(long, default_value_t = 6)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Growth::Both)]
    pub scale: Growth,
    #[command(flatten)]
    pub descent: DescentOptions,
}

#[derive(Debug, Args)]
pub struct RuncountArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_parser = FAMILIES)]
    pub law: String,
    #[arg(long)]
    pub target: String,
    /// Training-mixture counts to try.
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Fit on models up to this size and measure error on larger ones.
    #[arg(long, value_parser = parse_count)]
    pub extrapolate_above: Option<u64>,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<String>,
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_parser = parse_count)]
    pub d: u64,
    /// Number of training mixtures; the rest are held out.
    #[arg(long)]
    pub train: usize,
    #[command(flatten)]
    pub fit: FitOptions,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub step: f64,
    #[arg(long = "min", default_value_t = 0.0)]
    pub min: f64,
}

/// A mixture as typed on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum MixtureArg {
    Positional(Vec<f64>),
    Named(Vec<(String, f64)>),
}

fn parse_weight(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

pub fn parse_mixture(s: &str) -> Result<MixtureArg, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let named = parts.iter().filter(|p| p.contains('=')).count();
    if named == 0 {
        return parts.iter().map(|p| parse_weight(p)).collect::<Result<_, _>>().map(MixtureArg::Positional);
    }
    if named != parts.len() {
        return Err("use either positional weights or name=value pairs, not both".into());
    }
    parts
        .iter()
        .map(|p| {
            let (name, value) = p.split_once('=').expect("every part has `=`");
            let name = name.trim();
            if name.is_empty() {
                return Err(format!("missing domain name in `{p}`"));
            }
            Ok((name.to_string(), parse_weight(value)?))
        })
        .collect::<Result<_, _>>()
        .map(MixtureArg::Named)
}

/// A positive integer count; scientific notation such as `3e9` is accepted.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return if v >= 1 { Ok(v) } else { Err("must be at least 1".into()) };
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(x >= 1.0 && x.fract() == 0.0 && x < u64::MAX as f64) {
        return Err(format!("`{s}` is not a positive integer"));
    }
    Ok(x as u64)
}
