use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Max-stabilized softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Multiclass cross entropy -log softmax(logits)[label].
/// Returns the loss and its gradient w.r.t. the logits (softmax - onehot).
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let n = logits.numel();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross entropy needs >= 2 classes, got {}",
            n
        )));
    }
    if label >= n {
        return Err(Error::InvalidArgument(format!(
            "label {} out of range for {} classes",
            label, n
        )));
    }
    let p = softmax(&logits.data);
    // log p[label] computed in the stabilized domain to avoid log(0).
    let m = logits.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.data.iter().map(|&v| (v - m).exp()).sum();
    let loss = z.ln() - (logits.data[label] - m);
    let mut grad = Tensor::from_vec(&logits.shape, p)?;
    grad.data[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean squared error over all elements, with gradient 2(pred-target)/N.
pub fn l2_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape != target.shape {
        return Err(Error::shape(
            "l2_loss",
            format!("{:?}", target.shape),
            format!("{:?}", pred.shape),
        ));
    }
    let n = pred.numel() as f64;
    let mut grad = Tensor::zeros(&pred.shape);
    let mut acc = 0.0;
    for i in 0..pred.numel() {
        let d = pred.data[i] - target.data[i];
        acc += d * d;
        grad.data[i] = 2.0 * d / n;
    }
    Ok((acc / n, grad))
}
