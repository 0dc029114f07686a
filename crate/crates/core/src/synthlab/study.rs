//! Experiment-design studies built on top of fitting.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::fitkit::{evaluate_mre, fit_law, FitConfig};
use crate::laws::{Family, YeVariant};
use crate::mixture::{Dataset, MixtureVector};
use crate::rng::substream;

/// Settings of a run-count sweep.
#[derive(Debug, Clone)]
pub struct RuncountSetup {
    pub family: Family,
    pub target: String,
    pub q_values: Vec<usize>,
    pub n_seeds: usize,
    pub fit: FitConfig,
    /// When set, fits use only records with `N ≤` this value and errors are measured on the
    /// larger models.
    pub extrapolate_above: Option<u64>,
    pub seed: u64,
}

/// Test-MRE distribution at one training-mixture count `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuncountRow {
    pub q: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    /// One test MRE (percent) per seed.
    pub mres: Vec<f64>,
}

pub(super) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn contains(set: &[MixtureVector], m: &MixtureVector) -> bool {
    set.iter().any(|x| x.weights() == m.weights())
}

fn shuffled_mixtures(data: &Dataset, seed: u64, name: &str, index: u64) -> Vec<MixtureVector> {
    let mut mixtures = data.distinct_mixtures();
    mixtures.shuffle(&mut substream(seed, name, index));
    mixtures
}

/// Fits on `q` training mixtures and measures MRE on unseen ones, for every `q` and seed.
///
/// Each seed draws one permutation of the distinct mixtures. The training set for `q` is its
/// first `q` entries and the test set is everything after the largest `q`, so arms of one seed
/// share their test mixtures and have nested training sets.
pub fn runcount_study(data: &Dataset, setup: &RuncountSetup) -> Result<Vec<RuncountRow>> {
    let n_mixtures = data.distinct_mixtures().len();
    let q_max = setup.q_values.iter().copied().max().ok_or_else(|| {
        Error::InvalidConfig("run-count study needs at least one q".into())
    })?;
    if q_max >= n_mixtures {
        return Err(Error::InfeasibleSplit(format!(
            "q = {q_max} leaves no test mixtures out of {n_mixtures}"
        )));
    }
    if setup.q_values.contains(&0) || setup.n_seeds == 0 {
        return Err(Error::InvalidConfig("q values and seed count must be positive".into()));
    }
    let in_train_budget = |n: u64| setup.extrapolate_above.is_none_or(|cap| n <= cap);
    let mut per_q = vec![Vec::with_capacity(setup.n_seeds); setup.q_values.len()];
    for s in 0..setup.n_seeds {
        let order = shuffled_mixtures(data, setup.seed, "runcount", s as u64);
        let test_mixtures = &order[q_max..];
        let test = data.filtered(|r| {
            contains(test_mixtures, &r.mixture) && setup.extrapolate_above.is_none_or(|cap| r.model_params > cap)
        });
        for (slot, &q) in per_q.iter_mut().zip(&setup.q_values) {
            let train_mixtures = &order[..q];
            let train = data.filtered(|r| contains(train_mixtures, &r.mixture) && in_train_budget(r.model_params));
            let config = FitConfig { seed: setup.fit.seed.wrapping_add(s as u64), ..setup.fit.clone() };
            let fit = fit_law(setup.family, &train, &setup.target, &config)?;
            slot.push(evaluate_mre(&fit.law, &test, &setup.target)?);
        }
    }
    Ok(setup
        .q_values
        .iter()
        .zip(per_q)
        .map(|(&q, mres)| {
            let mut sorted = mres.clone();
            sorted.sort_by(f64::total_cmp);
            RuncountRow {
                q,
                median: quantile(&sorted, 0.5),
                p25: quantile(&sorted, 0.25),
                p75: quantile(&sorted, 0.75),
                mres,
            }
        })
        .collect())
}

/// One row of a fixed-budget law comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub law: String,
    pub domain: String,
    pub train_mre: Option<f64>,
    pub test_mre: Option<f64>,
    /// `ok`, `not_converged`, or the name of the error that stopped the fit.
    pub status: String,
}

fn compare_one(family: Family, train: &Dataset, test: &Dataset, target: &str, config: &FitConfig) -> ComparisonRow {
    let mut row = ComparisonRow {
        law: family.name().to_string(),
        domain: target.to_string(),
        train_mre: None,
        test_mre: None,
        status: String::new(),
    };
    let outcome = fit_law(family, train, target, config).and_then(|fit| {
        let test_mre = evaluate_mre(&fit.law, test, target)?;
        Ok((fit, test_mre))
    });
    match outcome {
        Ok((fit, test_mre)) => {
            row.train_mre = Some(fit.train_mre_percent);
            row.test_mre = Some(test_mre);
            row.status = if fit.converged { "ok" } else { "not_converged" }.to_string();
        }
        Err(e) => row.status = e.name().to_string(),
    }
    row
}

/// Compares mixture-only laws on fixed-budget slices of `data`, for each target.
///
/// The fixed-(N, D) additive law and the four exponential laws are fitted on records with
/// `N = n` and `D = d`; the fixed-N additive law and the single-domain law on records with
/// `N = n`. Both slices are split into `n_train` training mixtures and the rest for testing.
/// A failed fit becomes a flagged row rather than an error. The single-domain law is skipped
/// (status `NotATrainingDomain`) for targets that are not training domains.
pub fn compare_fixed_budget(
    data: &Dataset,
    targets: &[String],
    n: u64,
    d: u64,
    n_train: usize,
    config: &FitConfig,
) -> Result<Vec<ComparisonRow>> {
    let budget = data.filtered(|r| r.model_params == n && r.tokens == d);
    let size = data.filtered(|r| r.model_params == n);
    let order = shuffled_mixtures(&size, config.seed, "compare", 0);
    if order.len() <= n_train {
        return Err(Error::InfeasibleSplit(format!(
            "{n_train} training mixtures leave no test mixtures out of {}",
            order.len()
        )));
    }
    let train_set = &order[..n_train];
    let split = |slice: &Dataset| {
        (slice.filtered(|r| contains(train_set, &r.mixture)), slice.filtered(|r| !contains(train_set, &r.mixture)))
    };
    let (budget_train, budget_test) = split(&budget);
    let (size_train, size_test) = split(&size);
    let fixed_budget_laws = [
        Family::AdditiveFixedBudget,
        Family::Ye(YeVariant::M1),
        Family::Ye(YeVariant::M2),
        Family::Ye(YeVariant::M3),
        Family::Ye(YeVariant::M4),
    ];
    let mut rows = Vec::new();
    for target in targets {
        for family in fixed_budget_laws {
            rows.push(compare_one(family, &budget_train, &budget_test, target, config));
        }
        rows.push(compare_one(Family::AdditiveFixedN, &size_train, &size_test, target, config));
        match Family::parse("ge", data.domain_names(), target) {
            Ok(ge) => rows.push(compare_one(ge, &size_train, &size_test, target, config)),
            Err(_) => rows.push(ComparisonRow {
                law: "ge".into(),
                domain: target.clone(),
                train_mre: None,
                test_mre: None,
                status: "NotATrainingDomain".into(),
            }),
        }
    }
    Ok(rows)
}
