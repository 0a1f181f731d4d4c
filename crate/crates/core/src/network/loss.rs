use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.rank() != 2 || a.dims() != b.dims() {
        return Err(shape_err(format!(
            "loss operands {:?} and {:?} must be equal matrices",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Cross-entropy of softmax(`logits`) against one-hot `labels`, averaged
/// over the batch, with its gradient w.r.t. the logits:
/// `(softmax(logits) − labels) / batch`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &Tensor) -> Result<(f32, Tensor)> {
    check_pair(logits, labels)?;
    let batch = logits.batch();
    let mut grad = Tensor::zeros(logits.dims());
    let mut total = 0.0f64;
    for r in 0..batch {
        let (x, t) = (logits.row(r), labels.row(r));
        let mut hot = None;
        for (j, &v) in t.iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(j);
            } else if v != 0.0 {
                return Err(Error::InvalidLabel(format!("row {r} is not one-hot")));
            }
        }
        let hot = hot.ok_or_else(|| Error::InvalidLabel(format!("row {r} has no class")))?;
        let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let sum: f64 = x.iter().map(|&v| ((v - max) as f64).exp()).sum();
        let log_z = max as f64 + sum.ln();
        total += log_z - x[hot] as f64;
        for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
            let p = ((x[j] as f64) - log_z).exp();
            *g = ((p - t[j] as f64) / batch as f64) as f32;
        }
    }
    Ok(((total / batch as f64) as f32, grad))
}

/// `½·mean_batch ‖y − t‖²` and its gradient `(y − t) / batch`.
pub fn squared_loss(y: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    check_pair(y, target)?;
    let batch = y.batch();
    let mut grad = Tensor::zeros(y.dims());
    let mut total = 0.0f64;
    for r in 0..batch {
        for ((g, &a), &b) in grad.row_mut(r).iter_mut().zip(y.row(r)).zip(target.row(r)) {
            let d = a - b;
            total += 0.5 * (d as f64) * (d as f64);
            *g = d / batch as f32;
        }
    }
    Ok(((total / batch as f64) as f32, grad))
}
