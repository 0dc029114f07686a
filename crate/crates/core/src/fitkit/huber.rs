/// Huber penalty: `x²/2` for `|x| < δ`, `δ(|x| − δ/2)` otherwise.
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a < delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the residual.
pub fn huber_derivative(residual: f64, delta: f64) -> f64 {
    if residual.abs() < delta {
        residual
    } else {
        delta * residual.signum()
    }
}
