use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use mixlaw::fitkit::{evaluate_mre, fit_law_warm, FitConfig};
use mixlaw::mixopt::{
    asymptote_trace, asymptotic_optimum, corner_profile, fixed_point_scan, mirror_descent, OptimizeConfig,
};
use mixlaw::mixture::{default_domain_names, flops, validate_mixture};
use mixlaw::runstore::{parse_runs, read_design, read_law, write_law, write_runs, FitMeta, LawArtifact};
use mixlaw::synthlab::{compare_fixed_budget, runcount_study, simplex_grid, synth_runs, RuncountSetup};
use mixlaw::{Error, Family, LawParams, TargetWeights};

use crate::args::*;
use crate::table::{num, nums, prefixed, Table};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

type Outcome = Result<String, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Optimize(a) => optimize(a),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(Analyze::Corners(a)) => corners(a),
        Command::Analyze(Analyze::FixedPoints(a)) => fixed_points(a),
        Command::Analyze(Analyze::Asymptotes(a)) => asymptotes(a),
        Command::Analyze(Analyze::Runcount(a)) => runcount(a),
        Command::Analyze(Analyze::Compare(a)) => compare(a),
        Command::Grid(a) => grid(a),
    }
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be a positive number, got {x}")))
    }
}

impl FitOptions {
    fn validate(&self) -> Result<(), CliError> {
        positive("delta", self.delta)?;
        if self.restarts == 0 {
            return Err(usage("--restarts must be at least 1"));
        }
        Ok(())
    }

    fn config(&self) -> FitConfig {
        FitConfig {
            delta: self.delta,
            n_restarts: self.restarts,
            n_hops: self.hops,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

impl DescentOptions {
    fn validate(&self) -> Result<(), CliError> {
        positive("eta", self.eta)?;
        positive("tol", self.tol)?;
        if !(self.min_weight >= 0.0 && self.min_weight < 1.0) {
            return Err(usage(format!("--min-weight must lie in [0, 1), got {}", self.min_weight)));
        }
        Ok(())
    }

    fn config(&self) -> OptimizeConfig {
        OptimizeConfig {
            eta: self.eta,
            max_iter: self.max_iter,
            tol: self.tol,
            min_weight: self.min_weight,
            ..OptimizeConfig::default()
        }
    }
}

fn check_weights(weights: &Option<Vec<f64>>, n_laws: usize) -> Result<(), CliError> {
    if let Some(w) = weights {
        if w.len() != n_laws {
            return Err(usage(format!("{} weights given for {n_laws} laws", w.len())));
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(usage("--weights must be nonnegative with a positive sum"));
        }
    }
    Ok(())
}

/// Resolves a command-line mixture against the domain order of a law.
fn resolve_mixture(arg: &MixtureArg, names: &[String]) -> Result<Vec<f64>, CliError> {
    let weights = match arg {
        MixtureArg::Positional(w) => w.clone(),
        MixtureArg::Named(pairs) => {
            let mut w = vec![0.0; names.len()];
            let mut seen = vec![false; names.len()];
            for (name, value) in pairs {
                let i = names.iter().position(|n| n == name).ok_or_else(|| {
                    Error::DomainMismatch(format!("unknown domain `{name}`; the law has {names:?}"))
                })?;
                if seen[i] {
                    return Err(usage(format!("domain `{name}` is given twice")));
                }
                seen[i] = true;
                w[i] = *value;
            }
            w
        }
    };
    Ok(validate_mixture(&weights, names)?.into_weights())
}

fn read_laws(paths: &[PathBuf]) -> Result<Vec<LawArtifact>, CliError> {
    Ok(paths.iter().map(|p| read_law(p)).collect::<mixlaw::Result<_>>()?)
}

/// Laws keyed by target, for analyses that weight targets.
fn laws_by_target(artifacts: &[LawArtifact]) -> Result<IndexMap<String, LawParams>, CliError> {
    let mut map = IndexMap::new();
    for a in artifacts {
        if map.insert(a.target.clone(), a.law.clone()).is_some() {
            return Err(Error::InvalidConfig(format!("two laws predict target `{}`", a.target)).into());
        }
    }
    Ok(map)
}

fn target_weights(artifacts: &[LawArtifact], weights: &Option<Vec<f64>>) -> Result<TargetWeights, CliError> {
    let w = weights.clone().unwrap_or_else(|| vec![1.0; artifacts.len()]);
    Ok(TargetWeights::new(artifacts.iter().map(|a| a.target.clone()).zip(w).collect())?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Domain(Error::Io(format!("{}: {e}", path.display()))))
}

fn fit(a: FitArgs) -> Outcome {
    a.fit.validate()?;
    let data = parse_runs(&a.runs)?;
    let family = Family::parse(&a.law, data.domain_names(), &a.target)?;
    let warm = match &a.warm {
        Some(path) => {
            let source = read_law(path)?.law;
            let embedded = if source.family() == family { source } else { source.embed_up()? };
            vec![embedded]
        }
        None => Vec::new(),
    };
    let result = fit_law_warm(family, &data, &a.target, &a.fit.config(), &warm)?;
    let artifact = LawArtifact {
        law: result.law.clone(),
        target: a.target.clone(),
        fit_meta: Some(FitMeta {
            huber: result.huber_value,
            delta: result.delta,
            seed: result.seed,
            n_points: result.n_points,
            train_mre_percent: result.train_mre_percent,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }),
    };
    write_law(&artifact, &a.out)?;
    let mut t = Table::new(&["law", "target", "huber", "train_mre_percent", "n_points", "converged"]);
    t.row(&[
        family.name().to_string(),
        a.target,
        num(result.huber_value),
        num(result.train_mre_percent),
        result.n_points.to_string(),
        result.converged.to_string(),
    ]);
    Ok(t.into_string())
}

fn predict(a: PredictArgs) -> Outcome {
    let artifact = read_law(&a.law)?;
    let h = resolve_mixture(&a.mixture, artifact.law.domain_names())?;
    let loss = artifact.law.eval(a.n as f64, a.d as f64, &h)?;
    let mut t = Table::new(&["loss", "flops"]);
    t.row(&[num(loss), num(flops(a.n, a.d))]);
    Ok(t.into_string())
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let artifacts = read_laws(&a.law)?;
    let data = parse_runs(&a.runs)?;
    let mut targets: Vec<String> = Vec::new();
    let mut rows: IndexMap<String, IndexMap<String, f64>> = IndexMap::new();
    for artifact in &artifacts {
        let mre = evaluate_mre(&artifact.law, &data, &artifact.target)?;
        if !targets.contains(&artifact.target) {
            targets.push(artifact.target.clone());
        }
        rows.entry(artifact.law.family().name().to_string()).or_default().insert(artifact.target.clone(), mre);
    }
    let mut header = vec!["law".to_string()];
    header.extend(targets.iter().cloned());
    let mut t = Table::new(&header);
    for (law, cells) in rows {
        let mut row = vec![law];
        row.extend(targets.iter().map(|target| cells.get(target).map(|x| num(*x)).unwrap_or_default()));
        t.row(&row);
    }
    Ok(t.into_string())
}

fn optimize(a: OptimizeArgs) -> Outcome {
    a.descent.validate()?;
    check_weights(&a.weights, a.laws.len())?;
    let artifacts = read_laws(&a.laws)?;
    let names = artifacts[0].law.domain_names().to_vec();
    let weights = a.weights.clone().unwrap_or_else(|| vec![1.0; artifacts.len()]);
    let weighted: Vec<(LawParams, f64)> = artifacts.iter().map(|x| x.law.clone()).zip(weights).collect();
    let mut config = a.descent.config();
    config.record_trajectory = a.trace.is_some();
    config.h0 = a.h0.as_ref().map(|h0| resolve_mixture(h0, &names)).transpose()?;
    let (n, d) = (a.n as f64, a.d as f64);
    let report = mirror_descent(&weighted, n, d, &config)?;

    if let (Some(path), Some(trajectory)) = (&a.trace, &report.trajectory) {
        let mut header = vec!["iter".to_string()];
        header.extend(prefixed("h_", &names));
        header.push("objective".into());
        let mut t = Table::new(&header);
        for (i, h) in trajectory.iter().enumerate() {
            let mut objective = 0.0;
            for (law, w) in &weighted {
                objective += w * law.eval(n, d, h.weights())?;
            }
            let mut row = vec![i.to_string()];
            row.extend(nums(h.weights()));
            row.push(num(objective));
            t.row(&row);
        }
        write_text(path, &t.into_string())?;
    }

    let mut header = prefixed("h_", &names);
    header.extend(["objective".to_string(), "n_iter".into(), "converged".into()]);
    let mut t = Table::new(&header);
    let mut row = nums(report.h_star.weights());
    row.extend([num(report.objective_value), report.n_iter.to_string(), report.converged.to_string()]);
    t.row(&row);
    Ok(t.into_string())
}

fn simulate(a: SimulateArgs) -> Outcome {
    let mut spec = read_design(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let data = synth_runs(&spec)?;
    write_runs(&data, &a.out)?;
    let mut t = Table::new(&["records", "targets", "mixtures"]);
    t.row(&[data.len().to_string(), spec.truth.len().to_string(), spec.mixtures.len().to_string()]);
    Ok(t.into_string())
}

fn corners(a: CornersArgs) -> Outcome {
    a.descent.validate()?;
    let artifacts = read_laws(&a.laws)?;
    let laws = laws_by_target(&artifacts)?;
    let reports = corner_profile(&laws, a.n as f64, a.d as f64, &a.descent.config())?;
    let names = artifacts[0].law.domain_names().to_vec();
    let mut header = vec!["target".to_string()];
    header.extend(prefixed("h_", &names));
    header.extend(["objective".to_string(), "n_iter".into()]);
    let mut t = Table::new(&header);
    for (target, report) in reports {
        let mut row = vec![target];
        row.extend(nums(report.h_star.weights()));
        row.extend([num(report.objective_value), report.n_iter.to_string()]);
        t.row(&row);
    }
    Ok(t.into_string())
}

fn fixed_points(a: FixedPointArgs) -> Outcome {
    a.descent.validate()?;
    let artifacts = read_laws(&a.laws)?;
    let laws = laws_by_target(&artifacts)?;
    let targets: Vec<String> = laws.keys().cloned().collect();
    let grid: Vec<TargetWeights> = simplex_grid(&targets, a.step, a.min)?
        .into_iter()
        .map(|m| TargetWeights::new(targets.iter().cloned().zip(m.weights().iter().copied()).collect()))
        .collect::<mixlaw::Result<_>>()?;
    let rows = fixed_point_scan(&laws, a.n as f64, a.d as f64, &grid, &a.descent.config())?;
    let names = artifacts[0].law.domain_names().to_vec();
    let mut header = prefixed("w_", &targets);
    header.extend(prefixed("h_", &names));
    header.extend(["js".to_string(), "fixed_point".into()]);
    let mut t = Table::new(&header);
    for r in rows {
        let mut row: Vec<String> = targets.iter().map(|target| num(r.w.get(target))).collect();
        row.extend(nums(r.h_star.weights()));
        row.extend([num(r.js), r.is_fixed_point.to_string()]);
        t.row(&row);
    }
    Ok(t.into_string())
}

fn asymptotes(a: AsymptoteArgs) -> Outcome {
    a.descent.validate()?;
    check_weights(&a.weights, a.laws.len())?;
    if !(a.factor > 1.0 && a.factor.is_finite()) {
        return Err(usage(format!("--factor must exceed 1, got {}", a.factor)));
    }
    if a.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    let artifacts = read_laws(&a.laws)?;
    let laws = laws_by_target(&artifacts)?;
    let w = target_weights(&artifacts, &a.weights)?;
    let schedule: Vec<(f64, f64)> = (0..a.steps)
        .map(|i| {
            let g = a.factor.powi(i as i32);
            match a.scale {
                Growth::Both => (a.n as f64 * g, a.d as f64 * g),
                Growth::N => (a.n as f64 * g, a.d as f64),
                Growth::D => (a.n as f64, a.d as f64 * g),
            }
        })
        .collect();
    let config = a.descent.config();
    let trace = asymptote_trace(&laws, &w, &schedule, &config)?;
    let names = artifacts[0].law.domain_names().to_vec();
    let mut header = vec!["n".to_string(), "d".into(), "flops".into()];
    header.extend(prefixed("h_", &names));
    header.push("objective".into());
    let mut t = Table::new(&header);
    for ((n, d), report) in schedule.iter().zip(&trace) {
        let mut row = vec![num(*n), num(*d), num(6.0 * n * d)];
        row.extend(nums(report.h_star.weights()));
        row.push(num(report.objective_value));
        t.row(&row);
    }
    if let Ok(limit) = asymptotic_optimum(&laws, &w, &config) {
        let mut row = vec!["inf".to_string(), "inf".into(), "inf".into()];
        row.extend(nums(limit.h_star.weights()));
        row.push(num(limit.objective_value));
        t.row(&row);
    }
    Ok(t.into_string())
}

fn runcount(a: RuncountArgs) -> Outcome {
    a.fit.validate()?;
    if a.seeds == 0 || a.q.contains(&0) {
        return Err(usage("--seeds and every --q must be at least 1"));
    }
    let data = parse_runs(&a.runs)?;
    let setup = RuncountSetup {
        family: Family::parse(&a.law, data.domain_names(), &a.target)?,
        target: a.target,
        q_values: a.q,
        n_seeds: a.seeds,
        fit: a.fit.config(),
        extrapolate_above: a.extrapolate_above,
        seed: a.fit.seed,
    };
    let rows = runcount_study(&data, &setup)?;
    let mut t = Table::new(&["q", "median_mre_percent", "p25", "p75", "n_seeds"]);
    for r in rows {
        t.row(&[r.q.to_string(), num(r.median), num(r.p25), num(r.p75), r.mres.len().to_string()]);
    }
    Ok(t.into_string())
}

fn compare(a: CompareArgs) -> Outcome {
    a.fit.validate()?;
    let data = parse_runs(&a.runs)?;
    let rows = compare_fixed_budget(&data, &a.targets, a.n, a.d, a.train, &a.fit.config())?;
    let mut t = Table::new(&["law", "domain", "train_mre_percent", "test_mre_percent", "status"]);
    let cell = |x: Option<f64>| x.map(num).unwrap_or_default();
    for r in rows {
        t.row(&[r.law, r.domain, cell(r.train_mre), cell(r.test_mre), r.status]);
    }
    Ok(t.into_string())
}

/// One line per grid point, weights comma separated, no header.
fn grid(a: GridArgs) -> Outcome {
    if a.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let points = simplex_grid(&default_domain_names(a.k), a.step, a.min)?;
    Ok(points.iter().map(|m| nums(m.weights()).join(",") + "\n").collect())
}
