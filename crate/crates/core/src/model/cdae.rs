//! Convolutional denoising autoencoder operating on log-intensity images.
//!
//! Encoder stages are `conv 3×3 → BN → ReLU`, decoder stages `conv 3×3 →
//! ReLU`, followed by a linear `conv 3×3` head to one channel. All
//! convolutions are stride 1 with same padding, so every stage keeps the input
//! size. The network predicts the log speckle field; the clean estimate is
//! the noisy log image minus that prediction, exponentiated.

use crate::batchnorm::{BatchNorm2d, BnState, DEFAULT_EPS, DEFAULT_MOMENTUM};
use crate::error::{Error, Result};
use crate::nn::{he_normal, Conv2d, Layer, LayerParams, Mode, Network, ParamRef, Sequential};
use crate::rng::SeededRng;
use crate::speckle::{log_transform, DEFAULT_FLOOR};
use crate::tensor::Tensor;

pub const ENCODER_STAGES: usize = 6;
pub const DECODER_STAGES: usize = 6;
pub const DEFAULT_WIDTH: usize = 32;

/// Initial weights of the final linear convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadInit {
    /// All zero, so an untrained network estimates no speckle and
    /// despeckling starts from the identity.
    Zero,
    /// Fan-in scaled normal like every other layer.
    HeNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdaeConfig {
    /// Output channels of each encoder stage.
    pub encoder_widths: Vec<usize>,
    /// Output channels of each decoder stage.
    pub decoder_widths: Vec<usize>,
    pub kernel: usize,
    pub use_bn: bool,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub head_init: HeadInit,
}

impl Default for CdaeConfig {
    fn default() -> Self {
        Self::uniform(ENCODER_STAGES, DECODER_STAGES, DEFAULT_WIDTH, true)
    }
}

impl CdaeConfig {
    pub fn uniform(encoder_stages: usize, decoder_stages: usize, width: usize, use_bn: bool) -> Self {
        Self {
            encoder_widths: vec![width; encoder_stages],
            decoder_widths: vec![width; decoder_stages],
            kernel: 3,
            use_bn,
            bn_eps: DEFAULT_EPS,
            bn_momentum: DEFAULT_MOMENTUM,
            head_init: HeadInit::Zero,
        }
    }

    /// Six encoder and six decoder stages of the given width.
    pub fn full(width: usize, use_bn: bool) -> Self {
        Self::uniform(ENCODER_STAGES, DECODER_STAGES, width, use_bn)
    }

    /// Two encoder and two decoder stages; small enough for exhaustive
    /// gradient checks.
    pub fn tiny(width: usize, use_bn: bool) -> Self {
        Self::uniform(2, 2, width, use_bn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return Err(Error::invalid("C-DAE needs at least one encoder and one decoder stage"));
        }
        if self.widths().any(|w| w == 0) {
            return Err(Error::invalid("C-DAE channel width must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel side must be odd, got {}", self.kernel)));
        }
        if self.use_bn {
            BnState::with_hyperparams(1, self.bn_eps, self.bn_momentum)?;
        }
        Ok(())
    }

    pub fn widths(&self) -> impl Iterator<Item = usize> + '_ {
        self.encoder_widths.iter().chain(&self.decoder_widths).copied()
    }

    /// Learnable scalars: every conv's weights and biases plus γ and β of each
    /// encoder BN.
    pub fn param_count(&self) -> usize {
        let kk = self.kernel * self.kernel;
        let mut total = 0;
        let mut in_ch = 1;
        for w in self.widths() {
            total += in_ch * w * kk + w;
            in_ch = w;
        }
        total += in_ch * kk + 1;
        if self.use_bn {
            total += 2 * self.encoder_widths.iter().sum::<usize>();
        }
        total
    }
}

/// The convolutional denoising autoencoder.
#[derive(Debug, Clone)]
pub struct Cdae {
    config: CdaeConfig,
    net: Sequential,
}

impl Cdae {
    /// Build with fan-in scaled normal weights drawn in layer order from `seed`.
    pub fn new(config: CdaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let k = config.kernel;
        let mut net = Sequential::new();
        let mut in_ch = 1;
        for (i, &w) in config.encoder_widths.iter().enumerate() {
            let name = format!("enc{}", i + 1);
            net.push(format!("{name}.conv"), Layer::Conv(Conv2d::new(he_normal(w, in_ch, k, &mut rng))?));
            if config.use_bn {
                let state = BnState::with_hyperparams(w, config.bn_eps, config.bn_momentum)?;
                net.push(format!("{name}.bn"), Layer::BatchNorm(BatchNorm2d::new(state)));
            }
            net.push(format!("{name}.relu"), Layer::relu());
            in_ch = w;
        }
        for (i, &w) in config.decoder_widths.iter().enumerate() {
            let name = format!("dec{}", i + 1);
            net.push(format!("{name}.conv"), Layer::Conv(Conv2d::new(he_normal(w, in_ch, k, &mut rng))?));
            net.push(format!("{name}.relu"), Layer::relu());
            in_ch = w;
        }
        let head = match config.head_init {
            HeadInit::Zero => LayerParams::zeros(1, in_ch, k),
            HeadInit::HeNormal => he_normal(1, in_ch, k, &mut rng),
        };
        net.push("head", Layer::Conv(Conv2d::new(head)?));
        Ok(Self { config, net })
    }

    pub fn config(&self) -> &CdaeConfig {
        &self.config
    }

    pub fn net(&self) -> &Sequential {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn bn_param_count(&self) -> usize {
        self.net
            .layers()
            .map(|(_, l)| match l {
                Layer::BatchNorm(bn) => 2 * bn.state.channels(),
                _ => 0,
            })
            .sum()
    }

    fn check_input(log_noisy: &Tensor) -> Result<()> {
        if log_noisy.channels() != 1 {
            return Err(Error::DimensionMismatch {
                op: "C-DAE input",
                dim: "channels",
                expected: 1,
                actual: log_noisy.channels(),
            });
        }
        Ok(())
    }

    /// Estimated log speckle for a batch of log-domain images. Training mode
    /// uses batch statistics; eval mode uses running statistics.
    pub fn forward_speckle_estimate(&mut self, log_noisy: &Tensor, mode: Mode) -> Result<Tensor> {
        Self::check_input(log_noisy)?;
        self.net.forward(log_noisy, mode)
    }

    /// Eval-mode speckle estimate through a shared reference.
    pub fn estimate_speckle(&self, log_noisy: &Tensor) -> Result<Tensor> {
        Self::check_input(log_noisy)?;
        self.net.infer(log_noisy)
    }

    /// `clamp(exp(ln z − N̂(ln z)), 0, 1)`: division of the observation by the
    /// estimated speckle, carried out in the log domain.
    pub fn despeckle(&self, noisy: &Tensor) -> Result<Tensor> {
        let log_noisy = log_transform(noisy, DEFAULT_FLOOR);
        let estimate = self.estimate_speckle(&log_noisy)?;
        log_noisy.zip_map(&estimate, "despeckle", |lz, n| (lz - n).exp().clamp(0.0, 1.0))
    }
}

impl Network for Cdae {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        self.forward_speckle_estimate(input, mode)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        self.net.backward(grad_output)
    }

    fn params(&mut self) -> Vec<ParamRef<'_>> {
        self.net.params()
    }
}
