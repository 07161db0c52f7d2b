//! Finite-difference gradient suites covering every layer type and both
//! complete networks. Piecewise-linear suites (anything with ReLU) get the
//! looser tolerance and retry failing elements with smaller steps.

use super::{Cdae, CdaeConfig, Dae, DaeConfig, DaeObjective, HeadInit};
use crate::batchnorm::{BatchNorm2d, BnState};
use crate::error::Result;
use crate::nn::{grad_check, he_normal, Conv2d, Dense, GradCheckOptions, GradCheckReport, Layer, Sequential};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::Tensor;

pub const SMOOTH_TOLERANCE: f64 = 1e-4;
pub const KINKED_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn random(shape: [usize; 4], rng: &mut SeededRng) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.normal()).collect()).expect("shape matches length")
}

fn with_random_bias(mut layer: crate::nn::LayerParams, rng: &mut SeededRng) -> crate::nn::LayerParams {
    for b in &mut layer.bias {
        *b = 0.1 * rng.normal();
    }
    layer
}

fn options(smooth: bool, inject_fault: bool) -> GradCheckOptions {
    GradCheckOptions {
        epsilon: if smooth { 1e-5 } else { 1e-6 },
        tolerance: if smooth { SMOOTH_TOLERANCE } else { KINKED_TOLERANCE },
        inject_fault,
        kink_retries: if smooth { 0 } else { 2 },
        ..GradCheckOptions::default()
    }
}

/// Run every suite for one seed.
pub fn gradient_suites(seed: u64, inject_fault: bool) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    let mut run = |name: &'static str, index: u64, smooth: bool, check: &dyn Fn(&mut SeededRng, &GradCheckOptions) -> Result<GradCheckReport>| -> Result<()> {
        let mut rng = SeededRng::new(derive_seed(seed, index));
        let report = check(&mut rng, &options(smooth, inject_fault))?;
        out.push(SuiteResult { name, report });
        Ok(())
    };

    run("conv", 1, true, &|rng, opts| {
        let mut net = Sequential::new();
        net.push("conv", Layer::Conv(Conv2d::new(with_random_bias(he_normal(3, 2, 3, rng), rng))?));
        let x = random([2, 2, 5, 5], rng);
        let t = random([2, 3, 5, 5], rng);
        grad_check(&net, &x, &t, opts)
    })?;

    run("dense", 2, true, &|rng, opts| {
        let mut net = Sequential::new();
        net.push("dense", Layer::Dense(Dense::new(with_random_bias(he_normal(4, 6, 1, rng), rng))?));
        let x = random([3, 6, 1, 1], rng);
        let t = random([3, 4, 1, 1], rng);
        grad_check(&net, &x, &t, opts)
    })?;

    run("relu", 3, false, &|rng, opts| {
        let mut net = Sequential::new();
        net.push("conv", Layer::Conv(Conv2d::new(with_random_bias(he_normal(2, 1, 3, rng), rng))?));
        net.push("relu", Layer::relu());
        let x = random([2, 1, 6, 6], rng);
        let t = random([2, 2, 6, 6], rng);
        grad_check(&net, &x, &t, opts)
    })?;

    run("sigmoid", 4, true, &|rng, opts| {
        let mut net = Sequential::new();
        net.push("dense", Layer::Dense(Dense::new(with_random_bias(he_normal(5, 4, 1, rng), rng))?));
        net.push("sigmoid", Layer::sigmoid());
        let x = random([3, 4, 1, 1], rng);
        let t = random([3, 5, 1, 1], rng).map(|v| 0.5 + 0.2 * v);
        grad_check(&net, &x, &t, opts)
    })?;

    run("batchnorm", 5, true, &|rng, opts| {
        let mut state = BnState::new(3);
        for c in 0..3 {
            state.gamma[c] = 1.0 + 0.3 * rng.normal();
            state.beta[c] = 0.3 * rng.normal();
        }
        let mut net = Sequential::new();
        net.push("conv", Layer::Conv(Conv2d::new(with_random_bias(he_normal(3, 1, 3, rng), rng))?));
        net.push("bn", Layer::BatchNorm(BatchNorm2d::new(state)));
        let x = random([2, 1, 4, 4], rng);
        let t = random([2, 3, 4, 4], rng);
        grad_check(&net, &x, &t, opts)
    })?;

    run("cdae_tiny", 6, false, &|rng, opts| {
        let config = CdaeConfig {
            head_init: HeadInit::HeNormal,
            ..CdaeConfig::tiny(3, true)
        };
        let mut model = Cdae::new(config, rng.next_u64())?;
        // zero biases put pre-activations fed only by dead units exactly on
        // the ReLU kink
        for p in crate::nn::Network::params(&mut model) {
            if p.name.ends_with(".bias") {
                p.value.iter_mut().for_each(|b| *b = 0.1 * rng.normal());
            }
        }
        let x = random([2, 1, 8, 8], rng);
        let t = random([2, 1, 8, 8], rng).map(|v| 0.1 * v);
        grad_check(&model, &x, &t, opts)
    })?;

    run("dae_tiny", 7, true, &|rng, opts| {
        let config = DaeConfig {
            side: 4,
            hidden: 5,
            objective: DaeObjective::Denoise,
        };
        let model = Dae::new(config, rng.next_u64())?;
        let x = random([2, 1, 4, 4], rng).map(|v| 0.5 + 0.2 * v);
        let t = random([2, 1, 4, 4], rng).map(|v| 0.5 + 0.2 * v);
        grad_check(&model, &x, &t, opts)
    })?;

    Ok(out)
}
