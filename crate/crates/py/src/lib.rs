//! Python bindings: laws, run datasets, fitting and mixture optimization.

use std::path::PathBuf;

use mixlaw::fitkit::{evaluate_mre, fit_law, FitConfig};
use mixlaw::mixopt::{mirror_descent, OptimizeConfig};
use mixlaw::runstore::{
    format_runs, law_from_str, law_to_string, params_to_value, parse_runs, parse_runs_str, read_design, read_law,
    write_law, write_runs, LawArtifact, RunFormat,
};
use mixlaw::synthlab::{simplex_grid, synth_runs};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(mixlaw, MixlawError, PyValueError, "Raised for every library error; the message starts with the error name.");

fn err(e: mixlaw::Error) -> PyErr {
    MixlawError::new_err(format!("{}: {e}", e.name()))
}

fn run_format(name: &str) -> PyResult<RunFormat> {
    match name {
        "jsonl" => Ok(RunFormat::Jsonl),
        "csv" => Ok(RunFormat::Csv),
        other => Err(PyValueError::new_err(format!("format must be `jsonl` or `csv`, got `{other}`"))),
    }
}

/// A fitted or hand-written scaling law together with the target it predicts.
#[pyclass(module = "mixlaw", name = "Law", skip_from_py_object)]
#[derive(Clone)]
struct PyLaw {
    inner: LawArtifact,
}

#[pymethods]
impl PyLaw {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        law_from_str(text).map(|inner| PyLaw { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        read_law(&path).map(|inner| PyLaw { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        law_to_string(&self.inner)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_law(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.law.family().name()
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target.clone()
    }

    #[getter]
    fn domain_names(&self) -> Vec<String> {
        self.inner.law.domain_names().to_vec()
    }

    /// Parameters as a JSON object string, keyed as in law artifacts.
    fn params_json(&self) -> String {
        params_to_value(&self.inner.law).to_string()
    }

    /// Predicted loss for `n` parameters, `d` tokens and mixture `h`.
    fn eval(&self, n: f64, d: f64, h: Vec<f64>) -> PyResult<f64> {
        self.inner.law.eval(n, d, &h).map_err(err)
    }

    /// Gradient of the loss with respect to the natural parameters.
    fn grad_params(&self, n: f64, d: f64, h: Vec<f64>) -> PyResult<Vec<f64>> {
        mixlaw::laws::grad_params(&self.inner.law, n, d, &h).map_err(err)
    }

    /// Gradient of the loss with respect to the mixture weights.
    fn grad_mixture(&self, n: f64, d: f64, h: Vec<f64>) -> PyResult<Vec<f64>> {
        mixlaw::laws::grad_mixture(&self.inner.law, n, d, &h).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Law(family={:?}, target={:?}, k={})", self.family(), self.inner.target, self.inner.law.k())
    }
}

/// Run records over a fixed list of training domains.
#[pyclass(module = "mixlaw", name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: mixlaw::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Reads a `.jsonl` or `.csv` run file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        parse_runs(&path).map(|inner| PyDataset { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (text, format = "jsonl"))]
    fn parse(text: &str, format: &str) -> PyResult<Self> {
        parse_runs_str(text, run_format(format)?).map(|inner| PyDataset { inner }).map_err(err)
    }

    #[pyo3(signature = (format = "jsonl"))]
    fn dumps(&self, format: &str) -> PyResult<String> {
        format_runs(&self.inner, run_format(format)?).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_runs(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn domain_names(&self) -> Vec<String> {
        self.inner.domain_names().to_vec()
    }

    fn targets(&self) -> Vec<String> {
        self.inner.targets()
    }

    /// Records as `(run_id, model_params, tokens, weights, target, loss)` tuples.
    fn records(&self) -> Vec<(String, u64, u64, Vec<f64>, String, f64)> {
        self.inner
            .records()
            .iter()
            .map(|r| {
                (r.run_id.clone(), r.model_params, r.tokens, r.mixture.weights().to_vec(), r.target.clone(), r.loss)
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(records={}, domains={:?})", self.inner.len(), self.inner.domain_names())
    }
}

/// Outcome of a fit.
#[pyclass(module = "mixlaw", name = "FitResult", get_all, skip_from_py_object)]
struct PyFitResult {
    law: PyLaw,
    huber: f64,
    train_mre_percent: f64,
    n_points: usize,
    converged: bool,
}

#[pymethods]
impl PyFitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(family={:?}, huber={:e}, train_mre_percent={})",
            self.law.family(),
            self.huber,
            self.train_mre_percent
        )
    }
}

/// Optimal mixture and how it was reached.
#[pyclass(module = "mixlaw", name = "MixtureReport", get_all, skip_from_py_object)]
struct PyMixtureReport {
    h_star: Vec<f64>,
    domain_names: Vec<String>,
    objective: f64,
    n_iter: usize,
    converged: bool,
}

#[pymethods]
impl PyMixtureReport {
    fn __repr__(&self) -> String {
        format!("MixtureReport(h_star={:?}, objective={})", self.h_star, self.objective)
    }
}

/// Fits a law of the named family to the records of `target`.
#[pyfunction]
#[pyo3(signature = (data, family, target, seed = 0, restarts = 32, hops = 100, delta = 1e-3))]
fn fit(
    py: Python<'_>,
    data: &PyDataset,
    family: &str,
    target: &str,
    seed: u64,
    restarts: usize,
    hops: usize,
    delta: f64,
) -> PyResult<PyFitResult> {
    let family = mixlaw::Family::parse(family, data.inner.domain_names(), target).map_err(err)?;
    let config = FitConfig { seed, n_restarts: restarts, n_hops: hops, delta, ..FitConfig::default() };
    let result = py.detach(|| fit_law(family, &data.inner, target, &config)).map_err(err)?;
    Ok(PyFitResult {
        law: PyLaw { inner: LawArtifact { law: result.law, target: target.to_string(), fit_meta: None } },
        huber: result.huber_value,
        train_mre_percent: result.train_mre_percent,
        n_points: result.n_points,
        converged: result.converged,
    })
}

/// Mean relative error (percent) of `law` on the records of its target.
#[pyfunction]
fn evaluate(law: &PyLaw, data: &PyDataset) -> PyResult<f64> {
    evaluate_mre(&law.inner.law, &data.inner, &law.inner.target).map_err(err)
}

/// Mixture minimizing the weighted predicted loss at budget `(n, d)`.
#[pyfunction]
#[pyo3(signature = (laws, n, d, weights = None, min_weight = 0.0, eta = 0.1, max_iter = 10_000, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    laws: Vec<PyRef<'_, PyLaw>>,
    n: f64,
    d: f64,
    weights: Option<Vec<f64>>,
    min_weight: f64,
    eta: f64,
    max_iter: usize,
    tol: f64,
) -> PyResult<PyMixtureReport> {
    let weights = weights.unwrap_or_else(|| vec![1.0; laws.len()]);
    if weights.len() != laws.len() {
        return Err(PyValueError::new_err(format!("{} weights for {} laws", weights.len(), laws.len())));
    }
    let weighted: Vec<(mixlaw::LawParams, f64)> = laws.iter().map(|l| l.inner.law.clone()).zip(weights).collect();
    let config = OptimizeConfig { eta, max_iter, tol, min_weight, ..OptimizeConfig::default() };
    let report = py.detach(|| mirror_descent(&weighted, n, d, &config)).map_err(err)?;
    Ok(PyMixtureReport {
        domain_names: report.h_star.names().to_vec(),
        h_star: report.h_star.into_weights(),
        objective: report.objective_value,
        n_iter: report.n_iter,
        converged: report.converged,
    })
}

/// Synthesizes the records described by a design document.
#[pyfunction]
#[pyo3(signature = (path, seed = None))]
fn simulate(path: PathBuf, seed: Option<u64>) -> PyResult<PyDataset> {
    let mut spec = read_design(&path).map_err(err)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    synth_runs(&spec).map(|inner| PyDataset { inner }).map_err(err)
}

/// Every mixture of `k` domains with weights on a `step` lattice, each at least `min_weight`.
#[pyfunction]
#[pyo3(signature = (k, step, min_weight = 0.0))]
fn grid(k: usize, step: f64, min_weight: f64) -> PyResult<Vec<Vec<f64>>> {
    let names = mixlaw::mixture::default_domain_names(k);
    let points = simplex_grid(&names, step, min_weight).map_err(err)?;
    Ok(points.into_iter().map(|m| m.into_weights()).collect())
}

/// Training compute `6·N·D`.
#[pyfunction]
fn flops(n: u64, d: u64) -> f64 {
    mixlaw::mixture::flops(n, d)
}

/// Jensen-Shannon distance (natural log) between two mixtures of equal length.
#[pyfunction]
fn js_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let names = mixlaw::mixture::default_domain_names(a.len());
    let a = mixlaw::MixtureVector::new(a, names.clone()).map_err(err)?;
    let b = mixlaw::MixtureVector::new(b, names).map_err(err)?;
    mixlaw::mixture::js_distance(&a, &b).map_err(err)
}

#[pymodule]
#[pyo3(name = "mixlaw")]
fn mixlaw_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MixlawError", m.py().get_type::<MixlawError>())?;
    m.add_class::<PyLaw>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyMixtureReport>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(flops, m)?)?;
    m.add_function(wrap_pyfunction!(js_distance, m)?)?;
    Ok(())
}
