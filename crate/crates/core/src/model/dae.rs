//! Fully-connected autoencoders on flattened images:
//! `h = s(W·x + b)`, `x̂ = s(W*·h + b*)` with the logistic `s`.
//!
//! The same network serves as the plain autoencoder (trained clean → clean)
//! and the denoising autoencoder (trained noisy → clean).

use crate::error::{Error, Result};
use crate::nn::{he_normal, Dense, Layer, Mode, Network, ParamRef, Sequential};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const DEFAULT_HIDDEN: usize = 1024;

/// What the network is trained to map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaeObjective {
    /// Speckled image → clean image.
    Denoise,
    /// Clean image → itself.
    Reconstruct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaeConfig {
    /// Images are `side × side`; the input layer has `side²` units.
    pub side: usize,
    pub hidden: usize,
    pub objective: DaeObjective,
}

impl Default for DaeConfig {
    fn default() -> Self {
        Self {
            side: 64,
            hidden: DEFAULT_HIDDEN,
            objective: DaeObjective::Denoise,
        }
    }
}

impl DaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.hidden == 0 {
            return Err(Error::invalid("autoencoder sizes must be positive"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let d = self.side * self.side;
        2 * d * self.hidden + self.hidden + d
    }
}

#[derive(Debug, Clone)]
pub struct Dae {
    config: DaeConfig,
    net: Sequential,
}

impl Dae {
    pub fn new(config: DaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let d = config.side * config.side;
        let mut net = Sequential::new();
        net.push("encoder", Layer::Dense(Dense::new(he_normal(config.hidden, d, 1, &mut rng))?));
        net.push("encoder.sigmoid", Layer::sigmoid());
        net.push("decoder", Layer::Dense(Dense::new(he_normal(d, config.hidden, 1, &mut rng))?));
        net.push("decoder.sigmoid", Layer::sigmoid());
        Ok(Self { config, net })
    }

    pub fn config(&self) -> &DaeConfig {
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

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let d = self.config.side * self.config.side;
        if x.item_len() != d {
            return Err(Error::DimensionMismatch {
                op: "autoencoder input",
                dim: "pixels per image",
                expected: d,
                actual: x.item_len(),
            });
        }
        Ok(())
    }

    /// Reconstruction of each image, shaped like the input.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.net.infer(x)?.reshape(x.shape())
    }

    /// Denoised estimate of a speckled image: the observation is clipped to
    /// `[0, 1]` and reconstructed.
    pub fn despeckle(&self, noisy: &Tensor) -> Result<Tensor> {
        self.reconstruct(&noisy.map(|v| v.clamp(0.0, 1.0)))
    }
}

impl Network for Dae {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(input)?;
        self.net.forward(input, mode)?.reshape(input.shape())
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let n = grad_output.batch();
        let d = grad_output.item_len();
        let flat = grad_output.clone().reshape([n, d, 1, 1])?;
        self.net.backward(&flat)
    }

    fn params(&mut self) -> Vec<ParamRef<'_>> {
        self.net.params()
    }
}
