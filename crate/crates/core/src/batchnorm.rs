//! Spatial batch normalization.
//!
//! Statistics are taken per channel over the batch and both spatial axes.
//! Training mode normalizes with the batch mean and (biased) batch variance and
//! folds them into exponential moving averages; eval mode normalizes with
//! those running averages and never mutates state.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Learnable scale/shift, running statistics and their gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Weight of the newest batch in the moving average:
    /// `running = (1 - momentum)·running + momentum·batch`.
    pub momentum: f64,
    /// Training batches folded into the running statistics.
    pub batches_seen: u64,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
}

impl BnState {
    /// γ = 1, β = 0, running mean 0, running variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: DEFAULT_EPS,
            momentum: DEFAULT_MOMENTUM,
            batches_seen: 0,
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
        }
    }

    pub fn with_hyperparams(channels: usize, eps: f64, momentum: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("batch norm eps must be >= 0, got {eps}")));
        }
        if !(momentum > 0.0 && momentum <= 1.0) {
            return Err(Error::invalid(format!(
                "batch norm momentum must lie in (0, 1], got {momentum}"
            )));
        }
        Ok(Self {
            eps,
            momentum,
            ..Self::new(channels)
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Install externally known running statistics and mark them usable.
    pub fn set_running_stats(&mut self, mean: Vec<f64>, var: Vec<f64>) -> Result<()> {
        let c = self.channels();
        if mean.len() != c || var.len() != c {
            return Err(Error::DimensionMismatch {
                op: "BnState::set_running_stats",
                dim: "channels",
                expected: c,
                actual: mean.len().max(var.len()),
            });
        }
        if var.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("running variance must be non-negative"));
        }
        self.running_mean = mean;
        self.running_var = var;
        self.batches_seen = self.batches_seen.max(1);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }

    fn check_channels(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::DimensionMismatch {
                op: "batch norm",
                dim: "channels",
                expected: self.channels(),
                actual: x.channels(),
            });
        }
        Ok(())
    }
}

/// Values saved by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

/// Training-mode forward: normalize with batch statistics, then scale and
/// shift. Updates the running statistics.
pub fn bn_forward_train(x: &Tensor, state: &mut BnState) -> Result<(Tensor, BnCache)> {
    state.check_channels(x)?;
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let count = n * hw;
    if count < 2 {
        return Err(Error::DegenerateBatch(count));
    }

    let mut x_hat = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let planes = || (0..n).map(move |i| (i * c + ch) * hw);
        let mut sum = 0.0;
        for start in planes() {
            sum += x.data()[start..start + hw].iter().sum::<f64>();
        }
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for start in planes() {
            sq += x.data()[start..start + hw]
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>();
        }
        let var = sq / count as f64;
        let denom = var + state.eps;
        if denom <= 0.0 {
            return Err(Error::invalid(format!(
                "channel {ch} has zero variance and eps is 0"
            )));
        }
        let is = 1.0 / denom.sqrt();
        inv_std[ch] = is;

        let (g, b) = (state.gamma[ch], state.beta[ch]);
        for start in planes() {
            for j in start..start + hw {
                let xh = (x.data()[j] - mean) * is;
                x_hat.data_mut()[j] = xh;
                out.data_mut()[j] = g * xh + b;
            }
        }

        let m = state.momentum;
        state.running_mean[ch] = (1.0 - m) * state.running_mean[ch] + m * mean;
        state.running_var[ch] = (1.0 - m) * state.running_var[ch] + m * var;
    }
    state.batches_seen += 1;
    Ok((out, BnCache { x_hat, inv_std }))
}

/// Eval-mode forward using the running statistics. Pure.
pub fn bn_forward_eval(x: &Tensor, state: &BnState) -> Result<Tensor> {
    state.check_channels(x)?;
    if state.batches_seen == 0 {
        return Err(Error::UninitializedStatistics);
    }
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        let is = 1.0 / (state.running_var[ch] + state.eps).sqrt();
        let mean = state.running_mean[ch];
        let (g, b) = (state.gamma[ch], state.beta[ch]);
        for i in 0..n {
            let start = (i * c + ch) * hw;
            for j in start..start + hw {
                out.data_mut()[j] = g * (x.data()[j] - mean) * is + b;
            }
        }
    }
    Ok(out)
}

/// Backward through a training-mode forward, including the dependence of the
/// batch mean and variance on every input. Accumulates into
/// `state.grad_gamma`/`state.grad_beta` and returns the input gradient.
pub fn bn_backward(cache: &BnCache, state: &mut BnState, grad_output: &Tensor) -> Result<Tensor> {
    let shape = cache.x_hat.shape();
    grad_output.expect_shape(shape, "bn_backward")?;
    let [n, c, h, w] = shape;
    let hw = h * w;
    let count = (n * hw) as f64;
    let g = grad_output.data();
    let xh = cache.x_hat.data();

    let mut grad_input = Tensor::zeros(shape);
    for ch in 0..c {
        let starts: Vec<usize> = (0..n).map(|i| (i * c + ch) * hw).collect();
        let mut sum_g = 0.0;
        let mut sum_g_xh = 0.0;
        for &s in &starts {
            for j in s..s + hw {
                sum_g += g[j];
                sum_g_xh += g[j] * xh[j];
            }
        }
        state.grad_beta[ch] += sum_g;
        state.grad_gamma[ch] += sum_g_xh;

        // dx = γ·inv_std/M · (M·g − Σg − x̂·Σ(g·x̂))
        let scale = state.gamma[ch] * cache.inv_std[ch] / count;
        let gi = grad_input.data_mut();
        for &s in &starts {
            for j in s..s + hw {
                gi[j] = scale * (count * g[j] - sum_g - xh[j] * sum_g_xh);
            }
        }
    }
    Ok(grad_input)
}

/// Batch-norm layer holding its state and the cache of the last training
/// forward.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub state: BnState,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(state: BnState) -> Self {
        Self { state, cache: None }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (out, cache) = bn_forward_train(x, &mut self.state)?;
        self.cache = Some(cache);
        Ok(out)
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        bn_forward_eval(x, &self.state)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("batch norm"))?;
        bn_backward(cache, &mut self.state, grad_output)
    }
}
