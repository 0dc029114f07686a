use super::huber::{huber, huber_derivative};
use crate::error::{Error, Result};
use crate::laws::{At, Family, LawParams, Logs, Transform};
use crate::mixture::Dataset;

/// One observation flattened for fast evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub n: f64,
    pub d: f64,
    pub h: Vec<f64>,
    pub loss: f64,
    ln_n: f64,
    ln_d: f64,
    ln_h: Vec<f64>,
}

impl Point {
    fn at(&self) -> At<'_> {
        At {
            n: self.n,
            d: self.d,
            h: &self.h,
            logs: Some(Logs { ln_n: self.ln_n, ln_d: self.ln_d, ln_h: &self.ln_h }),
        }
    }
}

/// Huber fitting objective for one law family on one target's records.
#[derive(Debug, Clone)]
pub struct FitProblem {
    family: Family,
    domain_names: Vec<String>,
    layout: Vec<Transform>,
    points: Vec<Point>,
    delta: f64,
}

impl FitProblem {
    pub fn new(family: Family, data: &Dataset, target: &str, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidConfig(format!("Huber delta must be positive, got {delta}")));
        }
        let points: Vec<Point> = data
            .for_target(target)
            .map(|r| {
                let (n, d) = (r.model_params as f64, r.tokens as f64);
                let h = r.mixture.weights().to_vec();
                Point { n, d, ln_n: n.ln(), ln_d: d.ln(), ln_h: h.iter().map(|x| x.ln()).collect(), h, loss: r.loss }
            })
            .collect();
        if points.is_empty() {
            return Err(Error::EmptyDataset(target.to_string()));
        }
        Ok(FitProblem {
            family,
            domain_names: data.domain_names().to_vec(),
            layout: family.layout(data.k()),
            points,
            delta,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn min_loss(&self) -> f64 {
        self.points.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min)
    }

    pub fn law(&self, z: &[f64]) -> Result<LawParams> {
        LawParams::from_internal(self.family, self.domain_names.clone(), z)
    }

    /// `H(z) = (1/p) Σ_j Huber(L_j − L(N_j, D_j, h_j; z))`; writes `∂H/∂z` into `grad`.
    ///
    /// Returns `+∞` (and a NaN gradient) where the law cannot be evaluated.
    pub fn value_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        match self.try_value_grad(z, grad) {
            Ok(v) if v.is_finite() => v,
            _ => {
                grad.fill(f64::NAN);
                f64::INFINITY
            }
        }
    }

    fn try_value_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        let law = self.law(z)?;
        let dim = self.dim();
        let mut point_grad = vec![0.0; dim];
        let mut total = 0.0;
        grad.fill(0.0);
        for p in &self.points {
            let pred = law.eval_grad_natural_at(&p.at(), &mut point_grad)?;
            let r = p.loss - pred;
            total += huber(r, self.delta);
            let w = -huber_derivative(r, self.delta);
            for (g, pg) in grad.iter_mut().zip(&point_grad) {
                *g += w * pg;
            }
        }
        let scale = 1.0 / self.points.len() as f64;
        for ((g, t), zi) in grad.iter_mut().zip(&self.layout).zip(z) {
            *g *= scale * t.derivative(*zi);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        Ok(total * scale)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.value_grad(z, &mut g)
    }

    /// Predictions of the law at `z` on the problem's own points.
    pub fn predictions(&self, law: &LawParams) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pred = Vec::with_capacity(self.points.len());
        for p in &self.points {
            pred.push(law.eval(p.n, p.d, &p.h)?);
        }
        Ok((pred, self.points.iter().map(|p| p.loss).collect()))
    }
}

/// Huber objective value and gradient in internal coordinates.
pub fn fit_objective(family: Family, z: &[f64], data: &Dataset, target: &str, delta: f64) -> Result<(f64, Vec<f64>)> {
    let problem = FitProblem::new(family, data, target, delta)?;
    if z.len() != problem.dim() {
        return Err(Error::ShapeMismatch(format!("{} coordinates for a {}-parameter law", z.len(), problem.dim())));
    }
    let mut grad = vec![0.0; z.len()];
    let value = problem.try_value_grad(z, &mut grad)?;
    Ok((value, grad))
}
