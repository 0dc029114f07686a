//! Scaling-law families: evaluation, gradients, nesting embeddings and asymptotics.
//!
//! Each family has a *natural* parameter layout (the values a user reads and writes) and an
//! *internal* layout used by the fitter, related coordinate-wise by a [`Transform`]:
//! positive scales are fit as logarithms, bounded exponents through a sigmoid onto
//! `(0, EXPONENT_MAX)`, and sign-free parameters raw.

mod kernels;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureVector;
pub(crate) use kernels::{At, Logs};
use kernels::Outputs;

/// Upper bound for sigmoid-mapped exponents.
pub const EXPONENT_MAX: f64 = 5.0;

/// Smallest admissible `h_i` for the Ge law's own-domain weight.
pub const GE_MIN_WEIGHT: f64 = 1e-6;

/// `E + A/N^α + B/D^β`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChinchillaParams {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// `E + 1/Σ C_i h_i^{γ_i} + A/N^α + B/D^β`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveParams {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Additive law with `A^h = (Σ C^A_i h_i)^{γ^A}` and `B^h = (Σ C^B_i h_i)^{γ^B}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointParams {
    #[serde(rename = "E")]
    pub e: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(rename = "C_A")]
    pub c_a: Vec<f64>,
    #[serde(rename = "gamma_A")]
    pub gamma_a: f64,
    #[serde(rename = "C_B")]
    pub c_b: Vec<f64>,
    #[serde(rename = "gamma_B")]
    pub gamma_b: f64,
}

/// `E + (Σ C_i h_i)^γ + A/D^α + B/N^β`. Note the pairing: `A` goes with tokens, `B` with
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleParams {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub gamma: f64,
}

/// Joint law whose budget exponents also depend on the mixture:
/// `α^h = (Σ C^α_i h_i)^{γ^α}`, `β^h = (Σ C^β_i h_i)^{γ^β}`.
///
/// This has `6k + 5` parameters, i.e. `2k` more than the joint law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullParams {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(rename = "C_A")]
    pub c_a: Vec<f64>,
    #[serde(rename = "gamma_A")]
    pub gamma_a: f64,
    #[serde(rename = "C_B")]
    pub c_b: Vec<f64>,
    #[serde(rename = "gamma_B")]
    pub gamma_b: f64,
    #[serde(rename = "C_alpha")]
    pub c_alpha: Vec<f64>,
    pub gamma_alpha: f64,
    #[serde(rename = "C_beta")]
    pub c_beta: Vec<f64>,
    pub gamma_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum YeVariant {
    M1,
    M2,
    M3,
    M4,
}

/// Fixed-budget mixture laws of the exponential family:
///
/// * M1: `E + Σ C_i exp(γ_i h_i)`
/// * M2: `E + C Σ exp(γ_i h_i)`
/// * M3: `E + C exp(Π γ_i h_i)`
/// * M4: `E + C exp(Σ γ_i h_i)`
///
/// `c` holds k entries for M1 and a single entry otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct YeParams {
    pub variant: YeVariant,
    pub e: f64,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `(B/D^β + E) · C / h_i^γ`, modelling the loss of training domain `domain_index` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeParams {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub beta: f64,
    pub gamma: f64,
    pub domain_index: usize,
}

/// Additive law restricted to one `(N, D)` budget: `E + 1/Σ C_i h_i^{γ_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveFixedBudgetParams {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Additive law at one model size: `E + 1/Σ C_i h_i^{γ_i} + B/D^β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveFixedNParams {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub beta: f64,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Law family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Chinchilla,
    Simple,
    Additive,
    Joint,
    Full,
    Ye(YeVariant),
    Ge { domain_index: usize },
    AdditiveFixedBudget,
    AdditiveFixedN,
}

impl Family {
    /// Every family, with the Ge law bound to domain 0.
    pub const ALL: [Family; 12] = [
        Family::Chinchilla,
        Family::Simple,
        Family::Additive,
        Family::Joint,
        Family::Full,
        Family::Ye(YeVariant::M1),
        Family::Ye(YeVariant::M2),
        Family::Ye(YeVariant::M3),
        Family::Ye(YeVariant::M4),
        Family::Ge { domain_index: 0 },
        Family::AdditiveFixedBudget,
        Family::AdditiveFixedN,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Chinchilla => "chinchilla",
            Family::Simple => "simple",
            Family::Additive => "additive",
            Family::Joint => "joint",
            Family::Full => "full",
            Family::Ye(YeVariant::M1) => "ye-m1",
            Family::Ye(YeVariant::M2) => "ye-m2",
            Family::Ye(YeVariant::M3) => "ye-m3",
            Family::Ye(YeVariant::M4) => "ye-m4",
            Family::Ge { .. } => "ge",
            Family::AdditiveFixedBudget => "additive-fixed-nd",
            Family::AdditiveFixedN => "additive-fixed-n",
        }
    }

    /// Parses a family name. The Ge law is bound to the training domain named `target`.
    pub fn parse(name: &str, domain_names: &[String], target: &str) -> Result<Family> {
        let family = match name {
            "chinchilla" => Family::Chinchilla,
            "simple" => Family::Simple,
            "additive" => Family::Additive,
            "joint" => Family::Joint,
            "full" => Family::Full,
            "ye-m1" => Family::Ye(YeVariant::M1),
            "ye-m2" => Family::Ye(YeVariant::M2),
            "ye-m3" => Family::Ye(YeVariant::M3),
            "ye-m4" => Family::Ye(YeVariant::M4),
            "additive-fixed-nd" => Family::AdditiveFixedBudget,
            "additive-fixed-n" => Family::AdditiveFixedN,
            "ge" => {
                let domain_index = domain_names.iter().position(|n| n == target).ok_or_else(|| {
                    Error::DomainMismatch(format!("Ge law needs a training-domain target, got `{target}`"))
                })?;
                Family::Ge { domain_index }
            }
            other => return Err(Error::InvalidConfig(format!("unknown law family `{other}`"))),
        };
        Ok(family)
    }

    /// Coordinate transforms of the natural parameter layout for `k` domains.
    pub fn layout(&self, k: usize) -> Vec<Transform> {
        use Transform::{Exponent as X, Log as L, Raw as R};
        let rep = |t: Transform, n: usize| std::iter::repeat_n(t, n);
        let mut v = Vec::new();
        match self {
            Family::Chinchilla => v.extend([L, L, L, X, X]),
            Family::Additive => {
                v.extend([L, L, L, X, X]);
                v.extend(rep(L, k));
                v.extend(rep(X, k));
            }
            Family::Joint => {
                v.extend([L, X, X]);
                v.extend(rep(L, k));
                v.extend(rep(X, k));
                v.extend(rep(L, k));
                v.push(X);
                v.extend(rep(L, k));
                v.push(X);
            }
            Family::Simple => {
                v.extend([L, L, L, X, X]);
                v.extend(rep(L, k));
                v.push(R);
            }
            Family::Full => {
                v.push(L);
                v.extend(rep(L, k));
                v.extend(rep(X, k));
                for _ in 0..4 {
                    v.extend(rep(L, k));
                    v.push(X);
                }
            }
            Family::Ye(variant) => {
                v.push(R);
                v.extend(rep(L, if *variant == YeVariant::M1 { k } else { 1 }));
                v.extend(rep(R, k));
            }
            Family::Ge { .. } => v.extend([L, L, L, X, X]),
            Family::AdditiveFixedBudget => {
                v.push(L);
                v.extend(rep(L, k));
                v.extend(rep(X, k));
            }
            Family::AdditiveFixedN => {
                v.extend([L, L, X]);
                v.extend(rep(L, k));
                v.extend(rep(X, k));
            }
        }
        v
    }

    /// Number of fitted parameters for `k` domains.
    pub fn dim(&self, k: usize) -> usize {
        self.layout(k).len()
    }

    /// Position of `E` in the natural layout (every family has one).
    pub(crate) fn e_index(&self) -> usize {
        match self {
            Family::Ge { .. } => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Map from an unconstrained internal coordinate to a natural parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `θ = exp(z)`
    Log,
    /// `θ = EXPONENT_MAX · σ(z)`
    Exponent,
    /// `θ = z`
    Raw,
}

impl Transform {
    pub fn to_natural(self, z: f64) -> f64 {
        match self {
            Transform::Log => z.exp(),
            Transform::Exponent => EXPONENT_MAX / (1.0 + (-z).exp()),
            Transform::Raw => z,
        }
    }

    /// Inverse map; values on or outside the boundary are clamped just inside it.
    pub fn to_internal(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.max(1e-300).ln(),
            Transform::Exponent => {
                let p = (x / EXPONENT_MAX).clamp(1e-15, 1.0 - 1e-15);
                (p / (1.0 - p)).ln()
            }
            Transform::Raw => x,
        }
    }

    /// `dθ/dz` at internal coordinate `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Transform::Log => z.exp(),
            Transform::Exponent => {
                let s = 1.0 / (1.0 + (-z).exp());
                EXPONENT_MAX * s * (1.0 - s)
            }
            Transform::Raw => 1.0,
        }
    }
}

/// Parameters of one law family.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyParams {
    Chinchilla(ChinchillaParams),
    Simple(SimpleParams),
    Additive(AdditiveParams),
    Joint(JointParams),
    Full(FullParams),
    Ye(YeParams),
    Ge(GeParams),
    AdditiveFixedBudget(AdditiveFixedBudgetParams),
    AdditiveFixedN(AdditiveFixedNParams),
}

/// A fully specified scaling law: family parameters plus the ordered training domains.
#[derive(Debug, Clone, PartialEq)]
pub struct LawParams {
    domain_names: Vec<String>,
    params: FamilyParams,
}

fn check_len(what: &str, v: &[f64], k: usize) -> Result<()> {
    if v.len() != k {
        return Err(Error::ShapeMismatch(format!("{what} has {} entries, expected {k}", v.len())));
    }
    Ok(())
}

impl LawParams {
    pub fn new(domain_names: Vec<String>, params: FamilyParams) -> Result<Self> {
        let k = domain_names.len();
        if k == 0 {
            return Err(Error::ShapeMismatch("a law needs at least one domain".into()));
        }
        match &params {
            FamilyParams::Chinchilla(_) => {}
            FamilyParams::Simple(p) => check_len("C", &p.c, k)?,
            FamilyParams::Additive(p) => {
                check_len("C", &p.c, k)?;
                check_len("gamma", &p.gamma, k)?;
            }
            FamilyParams::Joint(p) => {
                check_len("C", &p.c, k)?;
                check_len("gamma", &p.gamma, k)?;
                check_len("C_A", &p.c_a, k)?;
                check_len("C_B", &p.c_b, k)?;
            }
            FamilyParams::Full(p) => {
                check_len("C", &p.c, k)?;
                check_len("gamma", &p.gamma, k)?;
                check_len("C_A", &p.c_a, k)?;
                check_len("C_B", &p.c_b, k)?;
                check_len("C_alpha", &p.c_alpha, k)?;
                check_len("C_beta", &p.c_beta, k)?;
            }
            FamilyParams::Ye(p) => {
                check_len("C", &p.c, if p.variant == YeVariant::M1 { k } else { 1 })?;
                check_len("gamma", &p.gamma, k)?;
            }
            FamilyParams::Ge(p) => {
                if p.domain_index >= k {
                    return Err(Error::ShapeMismatch(format!(
                        "Ge domain_index {} out of range for k={k}",
                        p.domain_index
                    )));
                }
            }
            FamilyParams::AdditiveFixedBudget(p) => {
                check_len("C", &p.c, k)?;
                check_len("gamma", &p.gamma, k)?;
            }
            FamilyParams::AdditiveFixedN(p) => {
                check_len("C", &p.c, k)?;
                check_len("gamma", &p.gamma, k)?;
            }
        }
        let law = LawParams { domain_names, params };
        if law.to_natural().iter().any(|x| !x.is_finite()) {
            return Err(Error::ShapeMismatch("law parameters must be finite".into()));
        }
        Ok(law)
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn k(&self) -> usize {
        self.domain_names.len()
    }

    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn family(&self) -> Family {
        match &self.params {
            FamilyParams::Chinchilla(_) => Family::Chinchilla,
            FamilyParams::Simple(_) => Family::Simple,
            FamilyParams::Additive(_) => Family::Additive,
            FamilyParams::Joint(_) => Family::Joint,
            FamilyParams::Full(_) => Family::Full,
            FamilyParams::Ye(p) => Family::Ye(p.variant),
            FamilyParams::Ge(p) => Family::Ge { domain_index: p.domain_index },
            FamilyParams::AdditiveFixedBudget(_) => Family::AdditiveFixedBudget,
            FamilyParams::AdditiveFixedN(_) => Family::AdditiveFixedN,
        }
    }

    /// Flattened natural parameters in the family's layout order.
    pub fn to_natural(&self) -> Vec<f64> {
        let mut v = Vec::new();
        match &self.params {
            FamilyParams::Chinchilla(p) => v.extend([p.e, p.a, p.b, p.alpha, p.beta]),
            FamilyParams::Additive(p) => {
                v.extend([p.e, p.a, p.b, p.alpha, p.beta]);
                v.extend(&p.c);
                v.extend(&p.gamma);
            }
            FamilyParams::Joint(p) => {
                v.extend([p.e, p.alpha, p.beta]);
                v.extend(&p.c);
                v.extend(&p.gamma);
                v.extend(&p.c_a);
                v.push(p.gamma_a);
                v.extend(&p.c_b);
                v.push(p.gamma_b);
            }
            FamilyParams::Simple(p) => {
                v.extend([p.e, p.a, p.b, p.alpha, p.beta]);
                v.extend(&p.c);
                v.push(p.gamma);
            }
            FamilyParams::Full(p) => {
                v.push(p.e);
                v.extend(&p.c);
                v.extend(&p.gamma);
                v.extend(&p.c_a);
                v.push(p.gamma_a);
                v.extend(&p.c_b);
                v.push(p.gamma_b);
                v.extend(&p.c_alpha);
                v.push(p.gamma_alpha);
                v.extend(&p.c_beta);
                v.push(p.gamma_beta);
            }
            FamilyParams::Ye(p) => {
                v.push(p.e);
                v.extend(&p.c);
                v.extend(&p.gamma);
            }
            FamilyParams::Ge(p) => v.extend([p.b, p.e, p.c, p.beta, p.gamma]),
            FamilyParams::AdditiveFixedBudget(p) => {
                v.push(p.e);
                v.extend(&p.c);
                v.extend(&p.gamma);
            }
            FamilyParams::AdditiveFixedN(p) => {
                v.extend([p.e, p.b, p.beta]);
                v.extend(&p.c);
                v.extend(&p.gamma);
            }
        }
        v
    }

    /// Rebuilds a law from its flattened natural parameters.
    pub fn from_natural(family: Family, domain_names: Vec<String>, x: &[f64]) -> Result<Self> {
        let k = domain_names.len();
        if x.len() != family.dim(k) {
            return Err(Error::ShapeMismatch(format!(
                "{family} with k={k} has {} parameters, got {}",
                family.dim(k),
                x.len()
            )));
        }
        let mut it = x.iter().copied();
        let mut next = || it.next().unwrap_or(f64::NAN);
        let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| next()).collect() };
        let params = match family {
            Family::Chinchilla => {
                let v = take(5);
                FamilyParams::Chinchilla(ChinchillaParams { e: v[0], a: v[1], b: v[2], alpha: v[3], beta: v[4] })
            }
            Family::Additive => {
                let v = take(5);
                FamilyParams::Additive(AdditiveParams {
                    e: v[0],
                    a: v[1],
                    b: v[2],
                    alpha: v[3],
                    beta: v[4],
                    c: take(k),
                    gamma: take(k),
                })
            }
            Family::Joint => {
                let v = take(3);
                FamilyParams::Joint(JointParams {
                    e: v[0],
                    alpha: v[1],
                    beta: v[2],
                    c: take(k),
                    gamma: take(k),
                    c_a: take(k),
                    gamma_a: take(1)[0],
                    c_b: take(k),
                    gamma_b: take(1)[0],
                })
            }
            Family::Simple => {
                let v = take(5);
                FamilyParams::Simple(SimpleParams {
                    e: v[0],
                    a: v[1],
                    b: v[2],
                    alpha: v[3],
                    beta: v[4],
                    c: take(k),
                    gamma: take(1)[0],
                })
            }
            Family::Full => FamilyParams::Full(FullParams {
                e: take(1)[0],
                c: take(k),
                gamma: take(k),
                c_a: take(k),
                gamma_a: take(1)[0],
                c_b: take(k),
                gamma_b: take(1)[0],
                c_alpha: take(k),
                gamma_alpha: take(1)[0],
                c_beta: take(k),
                gamma_beta: take(1)[0],
            }),
            Family::Ye(variant) => FamilyParams::Ye(YeParams {
                variant,
                e: take(1)[0],
                c: take(if variant == YeVariant::M1 { k } else { 1 }),
                gamma: take(k),
            }),
            Family::Ge { domain_index } => {
                let v = take(5);
                FamilyParams::Ge(GeParams { b: v[0], e: v[1], c: v[2], beta: v[3], gamma: v[4], domain_index })
            }
            Family::AdditiveFixedBudget => FamilyParams::AdditiveFixedBudget(AdditiveFixedBudgetParams {
                e: take(1)[0],
                c: take(k),
                gamma: take(k),
            }),
            Family::AdditiveFixedN => {
                let v = take(3);
                FamilyParams::AdditiveFixedN(AdditiveFixedNParams { e: v[0], b: v[1], beta: v[2], c: take(k), gamma: take(k) })
            }
        };
        LawParams::new(domain_names, params)
    }

    /// Internal (unconstrained) coordinates of this law.
    pub fn to_internal(&self) -> Vec<f64> {
        self.family()
            .layout(self.k())
            .into_iter()
            .zip(self.to_natural())
            .map(|(t, x)| t.to_internal(x))
            .collect()
    }

    pub fn from_internal(family: Family, domain_names: Vec<String>, z: &[f64]) -> Result<Self> {
        let layout = family.layout(domain_names.len());
        if layout.len() != z.len() {
            return Err(Error::ShapeMismatch(format!(
                "{family} expects {} internal coordinates, got {}",
                layout.len(),
                z.len()
            )));
        }
        let x: Vec<f64> = layout.iter().zip(z).map(|(t, &v)| t.to_natural(v)).collect();
        LawParams::from_natural(family, domain_names, &x)
    }

    fn check_h(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.k() {
            return Err(Error::ShapeMismatch(format!("mixture has {} weights, law expects {}", h.len(), self.k())));
        }
        Ok(())
    }

    fn kernel(&self, n: f64, d: f64, h: &[f64], out: Outputs<'_>) -> Result<f64> {
        self.kernel_at(&At { n, d, h, logs: None }, out)
    }

    pub(crate) fn kernel_at(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        self.check_h(at.h)?;
        match &self.params {
            FamilyParams::Chinchilla(p) => p.kernel(at, out),
            FamilyParams::Simple(p) => p.kernel(at, out),
            FamilyParams::Additive(p) => p.kernel(at, out),
            FamilyParams::Joint(p) => p.kernel(at, out),
            FamilyParams::Full(p) => p.kernel(at, out),
            FamilyParams::Ye(p) => p.kernel(at, out),
            FamilyParams::Ge(p) => p.kernel(at, out),
            FamilyParams::AdditiveFixedBudget(p) => p.kernel(at, out),
            FamilyParams::AdditiveFixedN(p) => p.kernel(at, out),
        }
    }

    /// Predicted loss at `n` parameters, `d` tokens and raw weights `h` (ordered as
    /// [`Self::domain_names`]). Families without a budget dependence ignore `n` and `d`.
    pub fn eval(&self, n: f64, d: f64, h: &[f64]) -> Result<f64> {
        self.kernel(n, d, h, Outputs { params: None, mixture: None })
    }

    pub fn eval_mixture(&self, n: f64, d: f64, h: &MixtureVector) -> Result<f64> {
        self.check_domains(h.names())?;
        self.eval(n, d, h.weights())
    }

    pub fn check_domains(&self, names: &[String]) -> Result<()> {
        if names != self.domain_names.as_slice() {
            return Err(Error::DomainMismatch(format!("law domains {:?}, got {:?}", self.domain_names, names)));
        }
        Ok(())
    }

    /// Value and `∂L/∂θ` in natural coordinates.
    pub fn eval_grad_natural(&self, n: f64, d: f64, h: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.eval_grad_natural_at(&At { n, d, h, logs: None }, grad)
    }

    pub(crate) fn eval_grad_natural_at(&self, at: &At<'_>, grad: &mut [f64]) -> Result<f64> {
        let dim = self.family().dim(self.k());
        if grad.len() != dim {
            return Err(Error::ShapeMismatch(format!("gradient buffer has {} slots, need {dim}", grad.len())));
        }
        let v = self.kernel_at(at, Outputs { params: Some(grad), mixture: None })?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::DegenerateMixtureTerm("parameter gradient is not finite".into()));
        }
        Ok(v)
    }

    /// Value and `∂L/∂h`, treating `h` as a free vector.
    pub fn eval_grad_mixture(&self, n: f64, d: f64, h: &[f64], grad: &mut [f64]) -> Result<f64> {
        if grad.len() != self.k() {
            return Err(Error::ShapeMismatch(format!("gradient buffer has {} slots, need {}", grad.len(), self.k())));
        }
        let v = self.kernel(n, d, h, Outputs { params: None, mixture: Some(grad) })?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::BoundaryGradient(format!("∂L/∂h_{i} is unbounded at h_{i} = {}", h[i])));
        }
        Ok(v)
    }

    /// Asymptotic loss `E + 1/Σ C_i h_i^{γ_i}` (the `N, D → ∞` limit), for families with a
    /// reciprocal mixture term.
    pub fn asymptotic_loss(&self, h: &[f64]) -> Result<f64> {
        self.check_h(h)?;
        self.asymptotic_law()?.eval(f64::INFINITY, f64::INFINITY, h)
    }

    /// The `N, D → ∞` limit as a fixed-budget additive law.
    pub fn asymptotic_law(&self) -> Result<LawParams> {
        let (e, c, gamma) = match &self.params {
            FamilyParams::Additive(p) => (p.e, &p.c, &p.gamma),
            FamilyParams::Joint(p) => (p.e, &p.c, &p.gamma),
            FamilyParams::Full(p) => (p.e, &p.c, &p.gamma),
            FamilyParams::AdditiveFixedBudget(p) => (p.e, &p.c, &p.gamma),
            FamilyParams::AdditiveFixedN(p) => (p.e, &p.c, &p.gamma),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "asymptotic loss is defined for additive, joint and full laws, not {}",
                    self.family()
                )))
            }
        };
        let params = AdditiveFixedBudgetParams { e, c: c.clone(), gamma: gamma.clone() };
        LawParams::new(self.domain_names.clone(), FamilyParams::AdditiveFixedBudget(params))
    }
}

/// `∂L/∂z` in the fitter's internal coordinates.
pub fn grad_params(law: &LawParams, n: f64, d: f64, h: &[f64]) -> Result<Vec<f64>> {
    let family = law.family();
    let mut g = vec![0.0; family.dim(law.k())];
    law.eval_grad_natural(n, d, h, &mut g)?;
    let z = law.to_internal();
    for ((gi, t), zi) in g.iter_mut().zip(family.layout(law.k())).zip(z) {
        *gi *= t.derivative(zi);
    }
    Ok(g)
}

/// `∂L/∂h` for each domain weight.
pub fn grad_mixture(law: &LawParams, n: f64, d: f64, h: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; law.k()];
    law.eval_grad_mixture(n, d, h, &mut g)?;
    Ok(g)
}

/// Joint law with `γ^A = γ^B = 1`, `C^A_i = A`, `C^B_i = B`, reproducing the additive law.
pub fn embed_additive_in_joint(p: &AdditiveParams) -> JointParams {
    let k = p.c.len();
    JointParams {
        e: p.e,
        alpha: p.alpha,
        beta: p.beta,
        c: p.c.clone(),
        gamma: p.gamma.clone(),
        c_a: vec![p.a; k],
        gamma_a: 1.0,
        c_b: vec![p.b; k],
        gamma_b: 1.0,
    }
}

/// Full law with `γ^α = γ^β = 1`, `C^α_i = α`, `C^β_i = β`, reproducing the joint law.
pub fn embed_joint_in_full(p: &JointParams) -> FullParams {
    let k = p.c.len();
    FullParams {
        e: p.e,
        c: p.c.clone(),
        gamma: p.gamma.clone(),
        c_a: p.c_a.clone(),
        gamma_a: p.gamma_a,
        c_b: p.c_b.clone(),
        gamma_b: p.gamma_b,
        c_alpha: vec![p.alpha; k],
        gamma_alpha: 1.0,
        c_beta: vec![p.beta; k],
        gamma_beta: 1.0,
    }
}

impl LawParams {
    /// Embeds an additive law into the joint family, or a joint law into the full family.
    pub fn embed_up(&self) -> Result<LawParams> {
        let params = match &self.params {
            FamilyParams::Additive(p) => FamilyParams::Joint(embed_additive_in_joint(p)),
            FamilyParams::Joint(p) => FamilyParams::Full(embed_joint_in_full(p)),
            _ => return Err(Error::InvalidConfig(format!("{} has no enclosing family", self.family()))),
        };
        LawParams::new(self.domain_names.clone(), params)
    }
}

/// Upper bound on the target entropy when it is training domain `domain_index`: `E + 1/C_i`.
pub fn entropy_bound(p: &AdditiveParams, domain_index: usize) -> Result<f64> {
    let c = p.c.get(domain_index).ok_or_else(|| {
        Error::ShapeMismatch(format!("domain_index {domain_index} out of range for k={}", p.c.len()))
    })?;
    Ok(p.e + 1.0 / c)
}

impl ChinchillaParams {
    pub fn eval(&self, n: f64, d: f64) -> f64 {
        self.e + self.a * n.powf(-self.alpha) + self.b * d.powf(-self.beta)
    }
}

impl AdditiveParams {
    pub fn eval(&self, n: f64, d: f64, h: &[f64]) -> Result<f64> {
        check_len("h", h, self.c.len())?;
        self.kernel(&At { n, d, h, logs: None }, Outputs { params: None, mixture: None })
    }
}

impl JointParams {
    pub fn eval(&self, n: f64, d: f64, h: &[f64]) -> Result<f64> {
        check_len("h", h, self.c.len())?;
        self.kernel(&At { n, d, h, logs: None }, Outputs { params: None, mixture: None })
    }
}

impl SimpleParams {
    pub fn eval(&self, n: f64, d: f64, h: &[f64]) -> Result<f64> {
        check_len("h", h, self.c.len())?;
        self.kernel(&At { n, d, h, logs: None }, Outputs { params: None, mixture: None })
    }
}

impl FullParams {
    pub fn eval(&self, n: f64, d: f64, h: &[f64]) -> Result<f64> {
        check_len("h", h, self.c.len())?;
        self.kernel(&At { n, d, h, logs: None }, Outputs { params: None, mixture: None })
    }
}

impl YeParams {
    pub fn eval(&self, h: &[f64]) -> Result<f64> {
        check_len("h", h, self.gamma.len())?;
        self.kernel(&At { n: f64::NAN, d: f64::NAN, h, logs: None }, Outputs { params: None, mixture: None })
    }
}

impl GeParams {
    pub fn eval(&self, d: f64, h: &[f64]) -> Result<f64> {
        if self.domain_index >= h.len() {
            return Err(Error::ShapeMismatch(format!("domain_index {} out of range", self.domain_index)));
        }
        self.kernel(&At { n: f64::NAN, d, h, logs: None }, Outputs { params: None, mixture: None })
    }
}

impl AdditiveFixedBudgetParams {
    pub fn eval(&self, h: &[f64]) -> Result<f64> {
        check_len("h", h, self.c.len())?;
        self.kernel(&At { n: f64::NAN, d: f64::NAN, h, logs: None }, Outputs { params: None, mixture: None })
    }
}

impl AdditiveFixedNParams {
    pub fn eval(&self, d: f64, h: &[f64]) -> Result<f64> {
        check_len("h", h, self.c.len())?;
        self.kernel(&At { n: f64::NAN, d, h, logs: None }, Outputs { params: None, mixture: None })
    }
}
