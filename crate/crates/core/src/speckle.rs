//! Multiplicative gamma speckle and the log/exp transforms that turn it into
//! additive noise: `z = x·y` becomes `ln z = ln x + ln y`.
//!
//! The speckle field `y` is i.i.d. gamma with shape `1/σ²` and scale `σ²`, so
//! it has unit mean and standard deviation `σ`.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Clamp applied before taking logarithms.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// The noise levels used for training and evaluation, 0.1 to 1.0 in steps of 0.1.
pub fn sigma_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleConfig {
    /// Standard deviation of the unit-mean multiplicative field.
    pub sigma: f64,
    pub seed: u64,
    pub floor: f64,
}

impl SpeckleConfig {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let config = Self {
            sigma,
            seed,
            floor: DEFAULT_FLOOR,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.floor.is_nan() || self.floor <= 0.0 {
            return Err(Error::invalid(format!("log floor must be positive, got {}", self.floor)));
        }
        Ok(())
    }
}

/// A clean image, its speckled observation and the draw that produced it.
#[derive(Debug, Clone)]
pub struct NoisyPair {
    pub clean: Tensor,
    pub noisy: Tensor,
    pub speckle: Tensor,
    pub sigma: f64,
    pub seed: u64,
}

/// Gamma speckle field with unit mean and variance `sigma²`.
pub fn sample_speckle(shape: [usize; 4], sigma: f64, rng: &mut SeededRng) -> Result<Tensor> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let var = sigma * sigma;
    let shape_k = 1.0 / var;
    let mut field = Tensor::zeros(shape);
    for v in field.data_mut() {
        *v = rng.gamma(shape_k) * var;
    }
    Ok(field)
}

/// Elementwise product `z = x·y`.
pub fn apply_speckle(clean: &Tensor, speckle: &Tensor) -> Result<Tensor> {
    if clean.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("clean image has negative values"));
    }
    clean.zip_map(speckle, "apply_speckle", |x, y| x * y)
}

/// Speckle `clean` with a field drawn from `config.seed`.
pub fn simulate(clean: &Tensor, config: &SpeckleConfig) -> Result<NoisyPair> {
    config.validate()?;
    let mut rng = SeededRng::new(config.seed);
    let speckle = sample_speckle(clean.shape(), config.sigma, &mut rng)?;
    let noisy = apply_speckle(clean, &speckle)?;
    Ok(NoisyPair {
        clean: clean.clone(),
        noisy,
        speckle,
        sigma: config.sigma,
        seed: config.seed,
    })
}

/// `ln(max(z, floor))` elementwise.
pub fn log_transform(z: &Tensor, floor: f64) -> Tensor {
    z.map(|v| v.max(floor).ln())
}

/// `exp(u)` elementwise, unclamped.
pub fn exp_transform(u: &Tensor) -> Tensor {
    u.map(f64::exp)
}

/// `exp(u)` clamped to the image range `[0, 1]`.
pub fn exp_recover(u: &Tensor) -> Tensor {
    u.map(|v| v.exp().clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(t: &Tensor) -> (f64, f64) {
        let n = t.len() as f64;
        let mean = t.sum() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn grid_values() {
        let g = sigma_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[9], 1.0);
    }

    #[test]
    fn tiny_sigma_concentrates_at_one() {
        let mut rng = SeededRng::new(1);
        let f = sample_speckle([1, 1, 64, 64], 0.01, &mut rng).unwrap();
        assert!(f.data().iter().all(|&v| (0.9..=1.1).contains(&v)));
    }

    #[test]
    fn moments_at_half() {
        let mut rng = SeededRng::new(2);
        let f = sample_speckle([1, 1, 1000, 1000], 0.5, &mut rng).unwrap();
        let (mean, var) = moments(&f);
        assert!((mean - 1.0).abs() < 3.0 * 0.5 / 1000.0, "mean {mean}");
        assert!((var - 0.25).abs() / 0.25 < 0.05, "var {var}");
        assert!(f.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn same_seed_same_field() {
        let a = sample_speckle([2, 1, 8, 8], 0.3, &mut SeededRng::new(7)).unwrap();
        let b = sample_speckle([2, 1, 8, 8], 0.3, &mut SeededRng::new(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(SpeckleConfig::new(0.0, 1).is_err());
        assert!(SpeckleConfig::new(f64::NAN, 1).is_err());
        assert!(sample_speckle([1, 1, 2, 2], -0.1, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn apply_identities() {
        let mut rng = SeededRng::new(3);
        let clean = Tensor::image(4, 4, (0..16).map(|i| i as f64 / 16.0).collect()).unwrap();
        let ones = Tensor::full(clean.shape(), 1.0);
        assert_eq!(apply_speckle(&clean, &ones).unwrap(), clean);
        let field = sample_speckle(clean.shape(), 0.4, &mut rng).unwrap();
        assert_eq!(apply_speckle(&ones, &field).unwrap(), field);
        assert!(apply_speckle(&clean, &Tensor::full([1, 1, 4, 3], 1.0)).is_err());
    }

    #[test]
    fn log_of_product_is_sum_of_logs() {
        let mut rng = SeededRng::new(4);
        let clean = Tensor::image(8, 8, (0..64).map(|_| rng.uniform_range(0.01, 1.0)).collect()).unwrap();
        let field = sample_speckle(clean.shape(), 0.7, &mut rng).unwrap();
        let z = apply_speckle(&clean, &field).unwrap();
        let lz = log_transform(&z, DEFAULT_FLOOR);
        for i in 0..z.len() {
            let expected = clean.data()[i].ln() + field.data()[i].ln();
            assert!((lz.data()[i] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn log_transform_clamps() {
        let z = Tensor::image(1, 3, vec![1.0, 0.0, 0.5]).unwrap();
        let l = log_transform(&z, DEFAULT_FLOOR);
        assert_eq!(l.data()[0], 0.0);
        assert_eq!(l.data()[1], DEFAULT_FLOOR.ln());
        assert!((exp_transform(&l).data()[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exp_recover_clamps() {
        let u = Tensor::image(1, 3, vec![0.0, 0.5f64.ln(), 3.0]).unwrap();
        assert_eq!(exp_transform(&u).data()[0], 1.0);
        let r = exp_recover(&u);
        assert!((r.data()[1] - 0.5).abs() < 1e-15);
        assert_eq!(r.data()[2], 1.0);
    }

    #[test]
    fn simulate_is_reproducible() {
        let clean = Tensor::full([1, 1, 16, 16], 0.5);
        let cfg = SpeckleConfig::new(0.2, 99).unwrap();
        let a = simulate(&clean, &cfg).unwrap();
        let b = simulate(&clean, &cfg).unwrap();
        assert_eq!(a.noisy, b.noisy);
        assert!(a.noisy.data().iter().all(|&v| v >= 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn log_exp_roundtrip(values in proptest::collection::vec(DEFAULT_FLOOR..1e3f64, 1..64)) {
                let n = values.len();
                let z = Tensor::from_vec([1, 1, 1, n], values).unwrap();
                let back = exp_transform(&log_transform(&z, DEFAULT_FLOOR));
                for (a, b) in z.data().iter().zip(back.data()) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
                }
            }

            #[test]
            fn speckle_is_positive(sigma in 0.05f64..1.5, seed in any::<u64>()) {
                let f = sample_speckle([1, 1, 8, 8], sigma, &mut SeededRng::new(seed)).unwrap();
                prop_assert!(f.data().iter().all(|&v| v > 0.0 && v.is_finite()));
            }
        }
    }
}
