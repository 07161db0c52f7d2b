//! Minibatch Adam training on freshly speckled clean images.
//!
//! Every batch draws a new speckle realization, so the network never sees the
//! same noisy input twice. A fixed validation split gets one realization drawn
//! up front and is scored in eval mode after each epoch.

use std::fmt::Write as _;
use std::time::Instant;

use super::{Cdae, Dae, DaeObjective};
use crate::error::{Error, Result};
use crate::nn::{mse_loss, Adam, AdamConfig, Mode, Network};
use crate::rng::SeededRng;
use crate::speckle::{apply_speckle, log_transform, sample_speckle, DEFAULT_FLOOR};
use crate::tensor::Tensor;

/// Input/target pairing used during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Log of the speckled image → log of the speckle field.
    LogSpeckle,
    /// Speckled image clipped to `[0, 1]` → clean image.
    Denoise,
    /// Clean image → clean image.
    Reconstruct,
}

/// A network with a natural training objective.
pub trait Trainable: Network {
    fn objective(&self) -> Objective;
}

impl Trainable for Cdae {
    fn objective(&self) -> Objective {
        Objective::LogSpeckle
    }
}

impl Trainable for Dae {
    fn objective(&self) -> Objective {
        match self.config().objective {
            DaeObjective::Denoise => Objective::Denoise,
            DaeObjective::Reconstruct => Objective::Reconstruct,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Noise levels; each batch uses one drawn uniformly from this list.
    pub sigmas: Vec<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Fraction of the dataset held out for validation loss.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigmas: crate::speckle::sigma_grid(),
            batch_size: 10,
            epochs: 200,
            adam: AdamConfig::default(),
            seed: 0,
            validation_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::invalid("at least one training sigma is required"));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(0.1 - 1e-12..=1.0 + 1e-12).contains(*s)) {
            return Err(Error::invalid(format!("training sigma {s} outside [0.1, 1.0]")));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must be in [0, 1)"));
        }
        Adam::new(self.adam).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-pixel loss over the epoch's training batches.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    /// Training loss after the given 1-based epoch.
    pub fn loss_at(&self, epoch: usize) -> Option<f64> {
        self.epochs.iter().find(|e| e.epoch == epoch).map(|e| e.train_loss)
    }

    /// `epoch,train_loss,val_loss,seconds`; an empty field when there was no
    /// validation split.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:.10e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.10e},{},{:.3}", e.epoch, e.train_loss, val, e.seconds);
        }
        out
    }
}

/// Split `0..n` into batches of `size`, folding a trailing singleton into the
/// previous batch so batch statistics are always defined.
pub fn batch_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size.max(1)).map(|s| (s, (s + size).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, end) = out.pop().unwrap();
        out.last_mut().unwrap().1 = end;
    }
    out
}

fn check_dataset(dataset: &[Tensor]) -> Result<[usize; 4]> {
    let first = dataset.first().ok_or(Error::EmptyCorpus)?;
    let shape = first.shape();
    if shape[0] != 1 || shape[1] != 1 {
        return Err(Error::invalid(format!("training images must be single grayscale images, got {shape:?}")));
    }
    for img in dataset {
        img.expect_shape(shape, "training set")?;
        if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("training images must lie in [0, 1]"));
        }
    }
    Ok(shape)
}

/// Network input and regression target for clean images under a given field.
fn make_pair(objective: Objective, clean: &Tensor, speckle: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
    match objective {
        Objective::LogSpeckle => {
            let speckle = speckle.expect("speckle field");
            let noisy = apply_speckle(clean, speckle)?;
            Ok((log_transform(&noisy, DEFAULT_FLOOR), log_transform(speckle, DEFAULT_FLOOR)))
        }
        Objective::Denoise => {
            let noisy = apply_speckle(clean, speckle.expect("speckle field"))?;
            Ok((noisy.map(|v| v.clamp(0.0, 1.0)), clean.clone()))
        }
        Objective::Reconstruct => Ok((clean.clone(), clean.clone())),
    }
}

/// Train `model` in place and return the per-epoch loss trace.
pub fn train<M: Trainable>(model: &mut M, dataset: &[Tensor], config: &TrainConfig) -> Result<TrainTrace> {
    config.validate()?;
    let shape = check_dataset(dataset)?;
    let objective = model.objective();
    let mut rng = SeededRng::new(config.seed);
    let mut adam = Adam::new(config.adam)?;

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut order);
    let n_val = (dataset.len() as f64 * config.validation_fraction).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    if train_idx.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 training images, have {}",
            train_idx.len()
        )));
    }
    let mut train_idx = train_idx.to_vec();
    log::info!("training on {} images, validating on {}", train_idx.len(), val_idx.len());

    let validation = if val_idx.is_empty() {
        None
    } else {
        let clean: Vec<&Tensor> = val_idx.iter().map(|&i| &dataset[i]).collect();
        let clean = Tensor::stack(&clean)?;
        let mut speckle = Tensor::zeros(clean.shape());
        for i in 0..clean.batch() {
            let sigma = config.sigmas[rng.below(config.sigmas.len())];
            let field = sample_speckle([1, 1, shape[2], shape[3]], sigma, &mut rng)?;
            speckle.item_mut(i).copy_from_slice(field.data());
        }
        Some(make_pair(objective, &clean, Some(&speckle))?)
    };

    let mut trace = TrainTrace::default();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        rng.shuffle(&mut train_idx);
        let mut weighted = 0.0;
        for (batch_no, (s, e)) in batch_bounds(train_idx.len(), config.batch_size).into_iter().enumerate() {
            let items: Vec<&Tensor> = train_idx[s..e].iter().map(|&i| &dataset[i]).collect();
            let clean = Tensor::stack(&items)?;
            let speckle = match objective {
                Objective::Reconstruct => None,
                _ => {
                    let sigma = config.sigmas[rng.below(config.sigmas.len())];
                    Some(sample_speckle(clean.shape(), sigma, &mut rng)?)
                }
            };
            let (input, target) = make_pair(objective, &clean, speckle.as_ref())?;

            model.zero_grad();
            let output = model.forward(&input, Mode::Train)?;
            let (loss, grad) = mse_loss(&output, &target)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_no + 1 });
            }
            model.backward(&grad)?;
            adam.step(&mut model.params())?;
            weighted += loss * (e - s) as f64;
        }
        let train_loss = weighted / train_idx.len() as f64;

        let val_loss = match &validation {
            Some((input, target)) => Some(mse_loss(&model.forward(input, Mode::Eval)?, target)?.0),
            None => None,
        };
        let seconds = start.elapsed().as_secs_f64();
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:?} ({seconds:.2}s)");
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds,
        });
    }
    Ok(trace)
}
