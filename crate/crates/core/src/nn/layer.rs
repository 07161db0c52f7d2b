use super::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use super::{Conv2d, Dense, Mode, Network, ParamRef};
use crate::batchnorm::BatchNorm2d;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    Dense(Dense),
    BatchNorm(BatchNorm2d),
    Relu { input: Option<Tensor> },
    Sigmoid { output: Option<Tensor> },
}

impl Layer {
    pub fn relu() -> Self {
        Layer::Relu { input: None }
    }

    pub fn sigmoid() -> Self {
        Layer::Sigmoid { output: None }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv(conv) => conv.forward(x),
            Layer::Dense(dense) => dense.forward(x),
            Layer::BatchNorm(bn) => match mode {
                Mode::Train => bn.forward_train(x),
                Mode::Eval => bn.forward_eval(x),
            },
            Layer::Relu { input } => {
                let y = relu(x);
                *input = Some(x.clone());
                Ok(y)
            }
            Layer::Sigmoid { output } => {
                let y = sigmoid(x);
                *output = Some(y.clone());
                Ok(y)
            }
        }
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(conv) => super::conv2d_forward(x, &conv.params),
            Layer::Dense(dense) => super::dense_forward(x, &dense.params),
            Layer::BatchNorm(bn) => bn.forward_eval(x),
            Layer::Relu { .. } => Ok(relu(x)),
            Layer::Sigmoid { .. } => Ok(sigmoid(x)),
        }
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(conv) => conv.backward(grad),
            Layer::Dense(dense) => dense.backward(grad),
            Layer::BatchNorm(bn) => bn.backward(grad),
            Layer::Relu { input } => {
                let x = input.as_ref().ok_or(Error::BackwardBeforeForward("relu"))?;
                relu_backward(x, grad)
            }
            Layer::Sigmoid { output } => {
                let y = output
                    .as_ref()
                    .ok_or(Error::BackwardBeforeForward("sigmoid"))?;
                sigmoid_backward(y, grad)
            }
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Layer::Conv(conv) => conv.params.param_count(),
            Layer::Dense(dense) => dense.params.param_count(),
            Layer::BatchNorm(bn) => 2 * bn.state.channels(),
            _ => 0,
        }
    }
}

/// A chain of named layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    layers: Vec<(String, Layer)>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, layer: Layer) {
        self.layers.push((name.into(), layer));
    }

    pub fn layers(&self) -> impl Iterator<Item = (&str, &Layer)> {
        self.layers.iter().map(|(n, l)| (n.as_str(), l))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = (&str, &mut Layer)> {
        self.layers.iter_mut().map(|(n, l)| (n.as_str(), l))
    }

    /// Number of learnable scalars (conv/dense weights and biases, BN γ and β).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|(_, l)| l.param_count()).sum()
    }

    /// Eval-mode forward without caching; usable through a shared reference.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for (_, layer) in &self.layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }
}

impl Network for Sequential {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut x = input.clone();
        for (_, layer) in &mut self.layers {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mut g = grad_output.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&mut self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        for (name, layer) in &mut self.layers {
            match layer {
                Layer::Conv(Conv2d { params, .. }) | Layer::Dense(Dense { params, .. }) => {
                    out.push(ParamRef {
                        name: format!("{name}.weight"),
                        value: params.weights.data_mut(),
                        grad: params.grad_weights.data_mut(),
                    });
                    out.push(ParamRef {
                        name: format!("{name}.bias"),
                        value: &mut params.bias,
                        grad: &mut params.grad_bias,
                    });
                }
                Layer::BatchNorm(bn) => {
                    let s = &mut bn.state;
                    out.push(ParamRef {
                        name: format!("{name}.gamma"),
                        value: &mut s.gamma,
                        grad: &mut s.grad_gamma,
                    });
                    out.push(ParamRef {
                        name: format!("{name}.beta"),
                        value: &mut s.beta,
                        grad: &mut s.grad_beta,
                    });
                }
                Layer::Relu { .. } | Layer::Sigmoid { .. } => {}
            }
        }
        out
    }
}
