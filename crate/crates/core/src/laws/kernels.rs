//! Closed-form law values with partial derivatives in natural coordinates.
//!
//! Every kernel writes `∂L/∂θ` into `gp` (laid out as in [`super::Family::layout`]) and
//! `∂L/∂h` into `gh` when those slices are provided.

use super::*;
use crate::error::{Error, Result};

/// `x^g` with partials, following the convention `0^0 = 1`, `0^g = 0` for `g > 0`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Pow {
    pub value: f64,
    /// `∂/∂x`; infinite when the derivative is singular at `x = 0`.
    pub dx: f64,
    /// `∂/∂g`
    pub dg: f64,
}

/// Where a law is evaluated. `logs` caches `ln N`, `ln D` and `ln h_i` for repeated evaluation
/// at the same point; powers are then taken as `exp(g ln x)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct At<'a> {
    pub n: f64,
    pub d: f64,
    pub h: &'a [f64],
    pub logs: Option<Logs<'a>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Logs<'a> {
    pub ln_n: f64,
    pub ln_d: f64,
    /// `ln h_i`, or `-∞` where `h_i = 0`.
    pub ln_h: &'a [f64],
}

impl At<'_> {
    fn budget_n(&self, exponent: f64) -> (f64, f64) {
        budget_power(self.n, self.logs.map(|l| l.ln_n), exponent)
    }

    fn budget_d(&self, exponent: f64) -> (f64, f64) {
        budget_power(self.d, self.logs.map(|l| l.ln_d), exponent)
    }

    fn pow_h(&self, i: usize, g: f64, what: &str) -> Result<Pow> {
        match self.logs {
            Some(l) if self.h[i] > 0.0 => {
                let value = (g * l.ln_h[i]).exp();
                Ok(Pow { value, dx: g * value / self.h[i], dg: value * l.ln_h[i] })
            }
            _ => powg(self.h[i], g, what),
        }
    }
}

pub(crate) fn powg(x: f64, g: f64, what: &str) -> Result<Pow> {
    if x > 0.0 {
        let value = x.powf(g);
        Ok(Pow { value, dx: g * value / x, dg: value * x.ln() })
    } else if x == 0.0 {
        if g == 0.0 {
            Ok(Pow { value: 1.0, dx: 0.0, dg: 0.0 })
        } else if g > 0.0 {
            let dx = if g < 1.0 {
                f64::INFINITY
            } else if g == 1.0 {
                1.0
            } else {
                0.0
            };
            Ok(Pow { value: 0.0, dx, dg: 0.0 })
        } else {
            Err(Error::DegenerateMixtureTerm(format!("{what}: zero base with negative exponent {g}")))
        }
    } else {
        Err(Error::DegenerateMixtureTerm(format!("{what}: negative base {x}")))
    }
}

/// `1 / Σ c_i h_i^{γ_i}`.
fn reciprocal_mixture(
    c: &[f64],
    gamma: &[f64],
    at: &At<'_>,
    dc: Option<&mut [f64]>,
    dgamma: Option<&mut [f64]>,
    dh: Option<&mut [f64]>,
) -> Result<f64> {
    const STACK: usize = 16;
    let k = at.h.len();
    let zero = Pow { value: 0.0, dx: 0.0, dg: 0.0 };
    let mut stack = [zero; STACK];
    let mut heap = Vec::new();
    let powers: &mut [Pow] = if k <= STACK {
        &mut stack[..k]
    } else {
        heap.resize(k, zero);
        &mut heap
    };
    let mut s = 0.0;
    for i in 0..k {
        let p = at.pow_h(i, gamma[i], "mixture term")?;
        s += c[i] * p.value;
        powers[i] = p;
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateMixtureTerm(format!("Σ C_i h_i^γ_i = {s}")));
    }
    let inv_s2 = 1.0 / (s * s);
    if let Some(dc) = dc {
        for i in 0..k {
            dc[i] = -powers[i].value * inv_s2;
        }
    }
    if let Some(dgamma) = dgamma {
        for i in 0..k {
            dgamma[i] = -c[i] * powers[i].dg * inv_s2;
        }
    }
    if let Some(dh) = dh {
        for i in 0..k {
            dh[i] = -c[i] * powers[i].dx * inv_s2;
        }
    }
    Ok(1.0 / s)
}

/// `(Σ c_i h_i)^g`.
fn linear_power(
    c: &[f64],
    g: f64,
    h: &[f64],
    what: &str,
    dc: Option<&mut [f64]>,
    dg: Option<&mut f64>,
    dh: Option<&mut [f64]>,
) -> Result<f64> {
    let s: f64 = c.iter().zip(h).map(|(a, b)| a * b).sum();
    let p = powg(s, g, what)?;
    if let Some(dc) = dc {
        for i in 0..h.len() {
            dc[i] = if h[i] == 0.0 { 0.0 } else { p.dx * h[i] };
        }
    }
    if let Some(dg) = dg {
        *dg = p.dg;
    }
    if let Some(dh) = dh {
        for i in 0..h.len() {
            dh[i] = if c[i] == 0.0 { 0.0 } else { p.dx * c[i] };
        }
    }
    Ok(p.value)
}

/// `x^{-e}` and its derivative in `e`.
fn budget_power(x: f64, ln_x: Option<f64>, exponent: f64) -> (f64, f64) {
    match ln_x {
        Some(ln) => {
            let v = (-exponent * ln).exp();
            (v, -ln * v)
        }
        None => {
            let v = x.powf(-exponent);
            (v, -x.ln() * v)
        }
    }
}

fn opt<'a>(want: bool, s: &'a mut [f64]) -> Option<&'a mut [f64]> {
    if want {
        Some(s)
    } else {
        None
    }
}

pub(crate) struct Outputs<'a> {
    pub params: Option<&'a mut [f64]>,
    pub mixture: Option<&'a mut [f64]>,
}

impl ChinchillaParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let (pn, dpn) = at.budget_n(self.alpha);
        let (pd, dpd) = at.budget_d(self.beta);
        if let Some(g) = out.params {
            g.copy_from_slice(&[1.0, pn, pd, self.a * dpn, self.b * dpd]);
        }
        if let Some(gh) = out.mixture {
            gh.fill(0.0);
        }
        Ok(self.e + self.a * pn + self.b * pd)
    }
}

impl AdditiveParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let h = at.h;
        let k = h.len();
        let (pn, dpn) = at.budget_n(self.alpha);
        let (pd, dpd) = at.budget_d(self.beta);
        let want = out.params.is_some();
        let mut scratch = [0.0; 0];
        let gp = out.params.unwrap_or(&mut scratch);
        let (head, tail) = if want { gp.split_at_mut(5) } else { (Default::default(), Default::default()) };
        let (gc, gg) = if want { tail.split_at_mut(k) } else { (Default::default(), Default::default()) };
        let mix = reciprocal_mixture(&self.c, &self.gamma, at, opt(want, gc), opt(want, gg), out.mixture)?;
        if want {
            head.copy_from_slice(&[1.0, pn, pd, self.a * dpn, self.b * dpd]);
        }
        Ok(self.e + mix + self.a * pn + self.b * pd)
    }
}

impl AdditiveFixedBudgetParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let h = at.h;
        let k = h.len();
        let want = out.params.is_some();
        let mut scratch = [0.0; 0];
        let gp = out.params.unwrap_or(&mut scratch);
        let (head, tail) = if want { gp.split_at_mut(1) } else { (Default::default(), Default::default()) };
        let (gc, gg) = if want { tail.split_at_mut(k) } else { (Default::default(), Default::default()) };
        let mix = reciprocal_mixture(&self.c, &self.gamma, at, opt(want, gc), opt(want, gg), out.mixture)?;
        if want {
            head[0] = 1.0;
        }
        Ok(self.e + mix)
    }
}

impl AdditiveFixedNParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let h = at.h;
        let k = h.len();
        let (pd, dpd) = at.budget_d(self.beta);
        let want = out.params.is_some();
        let mut scratch = [0.0; 0];
        let gp = out.params.unwrap_or(&mut scratch);
        let (head, tail) = if want { gp.split_at_mut(3) } else { (Default::default(), Default::default()) };
        let (gc, gg) = if want { tail.split_at_mut(k) } else { (Default::default(), Default::default()) };
        let mix = reciprocal_mixture(&self.c, &self.gamma, at, opt(want, gc), opt(want, gg), out.mixture)?;
        if want {
            head.copy_from_slice(&[1.0, pd, self.b * dpd]);
        }
        Ok(self.e + mix + self.b * pd)
    }
}

impl JointParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let h = at.h;
        let k = h.len();
        let (pn, dpn) = at.budget_n(self.alpha);
        let (pd, dpd) = at.budget_d(self.beta);
        let want_p = out.params.is_some();
        let want_h = out.mixture.is_some();
        let mut dh_mix = vec![0.0; if want_h { k } else { 0 }];
        let mut dh_a = dh_mix.clone();
        let mut dh_b = dh_mix.clone();

        let mut scratch = [0.0; 0];
        let gp = out.params.unwrap_or(&mut scratch);
        // [E, α, β, C(k), γ(k), C_A(k), γ_A, C_B(k), γ_B]
        let (head, rest) = if want_p { gp.split_at_mut(3) } else { (Default::default(), Default::default()) };
        let (gc, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (gg, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (gca, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (gga, rest) = if want_p { rest.split_at_mut(1) } else { (Default::default(), rest) };
        let (gcb, ggb) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };

        let mix = reciprocal_mixture(&self.c, &self.gamma, at, opt(want_p, gc), opt(want_p, gg), opt(want_h, &mut dh_mix))?;
        let mut dga = 0.0;
        let a_h = linear_power(&self.c_a, self.gamma_a, h, "A^h", opt(want_p, gca), Some(&mut dga), opt(want_h, &mut dh_a))?;
        let mut dgb = 0.0;
        let b_h = linear_power(&self.c_b, self.gamma_b, h, "B^h", opt(want_p, gcb), Some(&mut dgb), opt(want_h, &mut dh_b))?;

        if want_p {
            head.copy_from_slice(&[1.0, a_h * dpn, b_h * dpd]);
            gca.iter_mut().for_each(|x| *x *= pn);
            gga[0] = dga * pn;
            gcb.iter_mut().for_each(|x| *x *= pd);
            ggb[0] = dgb * pd;
        }
        if let Some(gh) = out.mixture {
            for i in 0..k {
                gh[i] = dh_mix[i] + dh_a[i] * pn + dh_b[i] * pd;
            }
        }
        Ok(self.e + mix + a_h * pn + b_h * pd)
    }
}

impl SimpleParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let h = at.h;
        let k = h.len();
        // A pairs with D and B with N, as in the simple law's published form.
        let (pd, dpd) = at.budget_d(self.alpha);
        let (pn, dpn) = at.budget_n(self.beta);
        let want = out.params.is_some();
        let mut scratch = [0.0; 0];
        let gp = out.params.unwrap_or(&mut scratch);
        let (head, rest) = if want { gp.split_at_mut(5) } else { (Default::default(), Default::default()) };
        let (gc, gg) = if want { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let mut dg = 0.0;
        let mix = linear_power(&self.c, self.gamma, h, "simple mixture term", opt(want, gc), Some(&mut dg), out.mixture)?;
        if want {
            head.copy_from_slice(&[1.0, pd, pn, self.a * dpd, self.b * dpn]);
            gg[0] = dg;
        }
        Ok(self.e + mix + self.a * pd + self.b * pn)
    }
}

impl FullParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let h = at.h;
        let k = h.len();
        let want_p = out.params.is_some();
        let want_h = out.mixture.is_some();
        let hk = if want_h { k } else { 0 };
        let (mut dh_mix, mut dh_a, mut dh_b, mut dh_al, mut dh_be) =
            (vec![0.0; hk], vec![0.0; hk], vec![0.0; hk], vec![0.0; hk], vec![0.0; hk]);

        let mut scratch = [0.0; 0];
        let gp = out.params.unwrap_or(&mut scratch);
        // [E, C(k), γ(k), C_A(k), γ_A, C_B(k), γ_B, C_α(k), γ_α, C_β(k), γ_β]
        let (ge, rest) = if want_p { gp.split_at_mut(1) } else { (Default::default(), Default::default()) };
        let (gc, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (gg, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (gca, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (gga, rest) = if want_p { rest.split_at_mut(1) } else { (Default::default(), rest) };
        let (gcb, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (ggb, rest) = if want_p { rest.split_at_mut(1) } else { (Default::default(), rest) };
        let (gcal, rest) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };
        let (ggal, rest) = if want_p { rest.split_at_mut(1) } else { (Default::default(), rest) };
        let (gcbe, ggbe) = if want_p { rest.split_at_mut(k) } else { (Default::default(), rest) };

        let mix = reciprocal_mixture(&self.c, &self.gamma, at, opt(want_p, gc), opt(want_p, gg), opt(want_h, &mut dh_mix))?;
        let (mut dga, mut dgb, mut dgal, mut dgbe) = (0.0, 0.0, 0.0, 0.0);
        let a_h = linear_power(&self.c_a, self.gamma_a, h, "A^h", opt(want_p, gca), Some(&mut dga), opt(want_h, &mut dh_a))?;
        let b_h = linear_power(&self.c_b, self.gamma_b, h, "B^h", opt(want_p, gcb), Some(&mut dgb), opt(want_h, &mut dh_b))?;
        let alpha_h =
            linear_power(&self.c_alpha, self.gamma_alpha, h, "α^h", opt(want_p, gcal), Some(&mut dgal), opt(want_h, &mut dh_al))?;
        let beta_h =
            linear_power(&self.c_beta, self.gamma_beta, h, "β^h", opt(want_p, gcbe), Some(&mut dgbe), opt(want_h, &mut dh_be))?;
        let (pn, dpn) = at.budget_n(alpha_h);
        let (pd, dpd) = at.budget_d(beta_h);
        // ∂L/∂α^h and ∂L/∂β^h
        let dl_dalpha = a_h * dpn;
        let dl_dbeta = b_h * dpd;

        if want_p {
            ge[0] = 1.0;
            gca.iter_mut().for_each(|x| *x *= pn);
            gga[0] = dga * pn;
            gcb.iter_mut().for_each(|x| *x *= pd);
            ggb[0] = dgb * pd;
            gcal.iter_mut().for_each(|x| *x *= dl_dalpha);
            ggal[0] = dgal * dl_dalpha;
            gcbe.iter_mut().for_each(|x| *x *= dl_dbeta);
            ggbe[0] = dgbe * dl_dbeta;
        }
        if let Some(gh) = out.mixture {
            for i in 0..k {
                gh[i] = dh_mix[i] + dh_a[i] * pn + dh_b[i] * pd + dh_al[i] * dl_dalpha + dh_be[i] * dl_dbeta;
            }
        }
        Ok(self.e + mix + a_h * pn + b_h * pd)
    }
}

impl YeParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let h = at.h;
        let k = h.len();
        let mut gp = out.params;
        let mut gh = out.mixture;
        match self.variant {
            YeVariant::M1 => {
                // [E, C(k), γ(k)]
                let mut value = self.e;
                for i in 0..k {
                    let ex = (self.gamma[i] * h[i]).exp();
                    value += self.c[i] * ex;
                    if let Some(g) = gp.as_deref_mut() {
                        g[1 + i] = ex;
                        g[1 + k + i] = self.c[i] * h[i] * ex;
                    }
                    if let Some(g) = gh.as_deref_mut() {
                        g[i] = self.c[i] * self.gamma[i] * ex;
                    }
                }
                if let Some(g) = gp {
                    g[0] = 1.0;
                }
                Ok(value)
            }
            YeVariant::M2 => {
                // [E, C, γ(k)]
                let c = self.c[0];
                let mut sum = 0.0;
                for i in 0..k {
                    let ex = (self.gamma[i] * h[i]).exp();
                    sum += ex;
                    if let Some(g) = gp.as_deref_mut() {
                        g[2 + i] = c * h[i] * ex;
                    }
                    if let Some(g) = gh.as_deref_mut() {
                        g[i] = c * self.gamma[i] * ex;
                    }
                }
                if let Some(g) = gp {
                    g[0] = 1.0;
                    g[1] = sum;
                }
                Ok(self.e + c * sum)
            }
            YeVariant::M3 => {
                let c = self.c[0];
                let factors: Vec<f64> = (0..k).map(|i| self.gamma[i] * h[i]).collect();
                let product: f64 = factors.iter().product();
                let ex = product.exp();
                // products over j ≠ i without division
                let mut others = vec![1.0; k];
                let mut acc = 1.0;
                for i in 0..k {
                    others[i] = acc;
                    acc *= factors[i];
                }
                acc = 1.0;
                for i in (0..k).rev() {
                    others[i] *= acc;
                    acc *= factors[i];
                }
                if let Some(g) = gp {
                    g[0] = 1.0;
                    g[1] = ex;
                    for i in 0..k {
                        g[2 + i] = c * ex * others[i] * h[i];
                    }
                }
                if let Some(g) = gh {
                    for i in 0..k {
                        g[i] = c * ex * others[i] * self.gamma[i];
                    }
                }
                Ok(self.e + c * ex)
            }
            YeVariant::M4 => {
                let c = self.c[0];
                let s: f64 = (0..k).map(|i| self.gamma[i] * h[i]).sum();
                let ex = s.exp();
                if let Some(g) = gp {
                    g[0] = 1.0;
                    g[1] = ex;
                    for i in 0..k {
                        g[2 + i] = c * ex * h[i];
                    }
                }
                if let Some(g) = gh {
                    for i in 0..k {
                        g[i] = c * ex * self.gamma[i];
                    }
                }
                Ok(self.e + c * ex)
            }
        }
    }
}

impl GeParams {
    pub(crate) fn kernel(&self, at: &At<'_>, out: Outputs<'_>) -> Result<f64> {
        let hi = at.h[self.domain_index];
        if !(hi >= GE_MIN_WEIGHT) {
            return Err(Error::DegenerateMixtureTerm(format!(
                "Ge law needs h_{} ≥ {GE_MIN_WEIGHT}, got {hi}",
                self.domain_index
            )));
        }
        let (pd, dpd) = at.budget_d(self.beta);
        let u = self.b * pd + self.e;
        let hp = hi.powf(-self.gamma);
        let v = self.c * hp;
        if let Some(g) = out.params {
            // [B, E, C, β, γ]
            g.copy_from_slice(&[pd * v, v, u * hp, self.b * dpd * v, -hi.ln() * u * v]);
        }
        if let Some(g) = out.mixture {
            g.fill(0.0);
            g[self.domain_index] = -self.gamma * u * v / hi;
        }
        Ok(u * v)
    }
}
