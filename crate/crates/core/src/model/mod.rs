//! Despeckling networks and their training loop.

mod cdae;
mod dae;
mod suites;
mod train;

pub use cdae::{Cdae, CdaeConfig, HeadInit, DEFAULT_WIDTH, DECODER_STAGES, ENCODER_STAGES};
pub use dae::{Dae, DaeConfig, DaeObjective, DEFAULT_HIDDEN};
pub use suites::{gradient_suites, SuiteResult, KINKED_TOLERANCE, SMOOTH_TOLERANCE};
pub use train::{batch_bounds, train, EpochRecord, Objective, TrainConfig, TrainTrace, Trainable};

use crate::error::Result;
use crate::tensor::Tensor;

/// Anything that maps a speckled image to a clean estimate.
pub trait Despeckler: Sync {
    /// Row label in evaluation reports.
    fn label(&self) -> String;

    /// `sigma` is the true noise level; blind methods ignore it.
    fn despeckle(&self, noisy: &Tensor, sigma: f64) -> Result<Tensor>;
}

impl Despeckler for Cdae {
    fn label(&self) -> String {
        if self.config().use_bn {
            "cdae_bn".into()
        } else {
            "cdae".into()
        }
    }

    fn despeckle(&self, noisy: &Tensor, _sigma: f64) -> Result<Tensor> {
        Cdae::despeckle(self, noisy)
    }
}

impl Despeckler for Dae {
    fn label(&self) -> String {
        match self.config().objective {
            DaeObjective::Denoise => "dae".into(),
            DaeObjective::Reconstruct => "ae".into(),
        }
    }

    fn despeckle(&self, noisy: &Tensor, _sigma: f64) -> Result<Tensor> {
        Dae::despeckle(self, noisy)
    }
}
