/// Leaky ReLU: `x` for `x > 0`, `slope * x` otherwise.
#[inline]
pub fn lrelu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`lrelu`]; the `x <= 0` branch owns the origin.
#[inline]
pub fn lrelu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}
