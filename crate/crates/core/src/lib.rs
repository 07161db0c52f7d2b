//! SAR image despeckling with a convolutional denoising autoencoder.
//!
//! The crate bundles everything needed to train and evaluate the network on
//! synthetic speckle:
//!
//! - [`nn`]: a small deterministic tensor/layer engine with explicit backprop
//!   and a finite-difference gradient checker.
//! - [`batchnorm`]: spatial batch normalization.
//! - [`speckle`]: unit-mean gamma speckle and log/exp transforms.
//! - [`model`]: the convolutional denoising autoencoder, the fully-connected
//!   baselines and the training loop.
//! - [`metrics`]: PSNR, SSIM and corpus evaluation reports.
//! - [`baseline`]: the multiplicative Lee filter.
//! - [`dataio`]: PGM images, resizing, manifests and checkpoints.
//! - [`synthetic`]: procedurally generated scene corpora.

pub mod baseline;
pub mod batchnorm;
pub mod dataio;
pub mod metrics;
pub mod model;
mod error;
pub mod nn;
pub mod rng;
pub mod speckle;
pub mod synthetic;
mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
