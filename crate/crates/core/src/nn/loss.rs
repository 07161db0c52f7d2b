use crate::error::Result;
use crate::tensor::Tensor;

/// Mean squared error over all elements and its gradient with respect to
/// `pred`, `2 (pred - target) / count`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.expect_shape(target.shape(), "mse_loss")?;
    let count = pred.len() as f64;
    let loss = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / count;
    let grad = pred.zip_map(target, "mse_loss", |p, t| 2.0 * (p - t) / count)?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(seed: u64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        Tensor::from_vec([2, 1, 3, 3], (0..18).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn equal_inputs() {
        let x = random(1);
        let (loss, grad) = mse_loss(&x, &x).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_offset() {
        let x = random(2);
        let (loss, _) = mse_loss(&x.map(|v| v + 1.0), &x).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random(3);
        let t = random(4);
        let (_, grad) = mse_loss(&p, &t).unwrap();
        let eps = 1e-6;
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.data_mut()[i] += eps;
            let mut minus = p.clone();
            minus.data_mut()[i] -= eps;
            let fd = (mse_loss(&plus, &t).unwrap().0 - mse_loss(&minus, &t).unwrap().0) / (2.0 * eps);
            let a = grad.data()[i];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(mse_loss(&Tensor::zeros([1, 1, 2, 2]), &Tensor::zeros([1, 1, 2, 3])).is_err());
    }
}
