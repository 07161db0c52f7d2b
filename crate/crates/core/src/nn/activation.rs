//! Elementwise activations and their derivatives.

use crate::error::Result;
use crate::tensor::Tensor;

/// `max(0, x)` elementwise.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes the gradient where `x > 0`. The subgradient at exactly zero is 0.
pub fn relu_backward(x: &Tensor, grad_output: &Tensor) -> Result<Tensor> {
    x.zip_map(grad_output, "relu_backward", |v, g| if v > 0.0 { g } else { 0.0 })
}

#[inline]
fn sigmoid_scalar(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Logistic function `1 / (1 + e^-u)`, evaluated without overflow for any
/// finite input.
pub fn sigmoid(u: &Tensor) -> Tensor {
    u.map(sigmoid_scalar)
}

/// Gradient through the logistic function, given its forward *output*.
pub fn sigmoid_backward(output: &Tensor, grad_output: &Tensor) -> Result<Tensor> {
    output.zip_map(grad_output, "sigmoid_backward", |s, g| g * s * (1.0 - s))
}
