use super::Tensor;
use crate::error::Result;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of [`relu`] given its input `x` and the upstream gradient.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    x.same_shape(grad_out, "relu backward")?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Softmax over every entry of `scores`, whatever its shape. Subtracts the
/// maximum before exponentiating.
pub fn spatial_softmax(scores: &Tensor) -> Result<Tensor> {
    scores.ensure_finite("spatial_softmax")?;
    let max = scores.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.data().iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::new(scores.shape().to_vec(), exps.into_iter().map(|e| e / total).collect())
}

/// Gradient with respect to the scores given the softmax output `alpha`.
pub fn spatial_softmax_backward(alpha: &Tensor, grad_alpha: &Tensor) -> Result<Tensor> {
    alpha.same_shape(grad_alpha, "softmax backward")?;
    let dot: f64 = alpha.data().iter().zip(grad_alpha.data()).map(|(a, g)| a * g).sum();
    let data = alpha
        .data()
        .iter()
        .zip(grad_alpha.data())
        .map(|(a, g)| a * (g - dot))
        .collect();
    Tensor::new(alpha.shape().to_vec(), data)
}
