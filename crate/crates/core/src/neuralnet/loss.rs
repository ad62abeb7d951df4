use crate::error::{shape_err, Result};

/// Mean squared error over every element.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(shape_err(target.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(crate::error::Error::Empty("loss operands"));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`mse_loss`] with respect to `pred`: `2 (pred - target) / N`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != target.len() {
        return Err(shape_err(target.len(), pred.len()));
    }
    let scale = 2.0 / pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| scale * (p - t)).collect())
}
