//! Minimal deterministic neural-network engine.
//!
//! Layers cache their forward inputs and expose explicit backward passes; there
//! is no autodiff graph. Everything runs single-threaded in a fixed order, so
//! identical seeds and inputs give bit-identical results.

mod activation;
mod conv;
mod dense;
pub mod gradcheck;
mod init;
mod layer;
mod loss;
mod optim;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d};
pub use dense::{dense_backward, dense_forward, Dense};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, GroupReport};
pub use init::he_normal;
pub use layer::{Layer, Sequential};
pub use loss::mse_loss;
pub use optim::{Adam, AdamConfig};

use crate::error::Result;
use crate::tensor::Tensor;

/// Learnable weights and bias of a convolution or dense layer, with gradient
/// buffers of identical shape.
///
/// Convolution weights are shaped `(out_ch, in_ch, k, k)`; dense weights are
/// `(out, in, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub grad_weights: Tensor,
    pub grad_bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(out_ch: usize, in_ch: usize, kernel: usize) -> Self {
        let shape = [out_ch, in_ch, kernel, kernel];
        Self {
            weights: Tensor::zeros(shape),
            bias: vec![0.0; out_ch],
            grad_weights: Tensor::zeros(shape),
            grad_bias: vec![0.0; out_ch],
        }
    }

    pub fn from_parts(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        let out_ch = weights.shape()[0];
        if bias.len() != out_ch {
            return Err(crate::Error::DimensionMismatch {
                op: "LayerParams::from_parts",
                dim: "bias length",
                expected: out_ch,
                actual: bias.len(),
            });
        }
        let grad_weights = Tensor::zeros(weights.shape());
        Ok(Self {
            weights,
            grad_weights,
            grad_bias: vec![0.0; out_ch],
            bias,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.data_mut().fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// Whether normalization layers use batch statistics (and update running
/// statistics) or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A named parameter slice paired with its gradient buffer.
pub struct ParamRef<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// A composite that can run forward, backpropagate, and expose parameters.
pub trait Network {
    /// Forward pass that caches whatever the backward pass needs.
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor>;

    /// Backpropagate `grad_output`, accumulating parameter gradients and
    /// returning the gradient with respect to the last forward input.
    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor>;

    /// Learnable parameters in a fixed, documented order.
    fn params(&mut self) -> Vec<ParamRef<'_>>;

    fn zero_grad(&mut self) {
        for p in self.params() {
            p.grad.fill(0.0);
        }
    }
}
