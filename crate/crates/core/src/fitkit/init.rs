use rand::Rng;

use super::objective::FitProblem;
use crate::error::Result;
use crate::laws::{Family, Transform, EXPONENT_MAX};
use crate::mixture::Dataset;

/// Log-scale parameters are drawn from `[ln LOG_LOW, ln LOG_HIGH]`.
pub const LOG_LOW: f64 = 1e-3;
pub const LOG_HIGH: f64 = 1e3;
/// Exponents are drawn uniformly in sigmoid pre-image space over this range.
pub const EXPONENT_LOW: f64 = 0.05;
pub const EXPONENT_HIGH: f64 = 1.5;
/// Sign-free parameters (other than `E`) are drawn from `[-RAW_SPAN, RAW_SPAN]`.
pub const RAW_SPAN: f64 = 2.0;

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws an internal parameter vector from the random-search box.
///
/// `E` is drawn uniformly from `(0, min_loss)`; see the module constants for the rest.
pub fn sample_start<R: Rng + ?Sized>(family: Family, k: usize, min_loss: f64, rng: &mut R) -> Vec<f64> {
    let e_index = family.e_index();
    let exp_lo = Transform::Exponent.to_internal(EXPONENT_LOW);
    let exp_hi = Transform::Exponent.to_internal(EXPONENT_HIGH);
    debug_assert!(EXPONENT_HIGH < EXPONENT_MAX);
    family
        .layout(k)
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            if i == e_index {
                return t.to_internal(min_loss * open_unit(rng));
            }
            match t {
                Transform::Log => rng.random_range(LOG_LOW.ln()..LOG_HIGH.ln()),
                Transform::Exponent => rng.random_range(exp_lo..exp_hi),
                Transform::Raw => rng.random_range(-RAW_SPAN..RAW_SPAN),
            }
        })
        .collect()
}

/// Random-search starting point for fitting `family` to `target`.
pub fn random_init<R: Rng + ?Sized>(family: Family, data: &Dataset, target: &str, rng: &mut R) -> Result<Vec<f64>> {
    let problem = FitProblem::new(family, data, target, 1e-3)?;
    Ok(sample_start(family, data.k(), problem.min_loss(), rng))
}
