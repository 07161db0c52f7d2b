//! Fully-connected affine layer `y = W·x + b` over flattened batch items.

use super::conv::gemm_rowmajor;
use super::LayerParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(input: &Tensor, params: &LayerParams) -> Result<()> {
    let [_, _, kh, kw] = params.weights.shape();
    if kh != 1 || kw != 1 {
        return Err(Error::invalid("dense weights must be shaped (out, in, 1, 1)"));
    }
    if input.item_len() != params.in_channels() {
        return Err(Error::DimensionMismatch {
            op: "dense",
            dim: "input features",
            expected: params.in_channels(),
            actual: input.item_len(),
        });
    }
    Ok(())
}

/// Affine map of each batch item; output shaped `(n, out, 1, 1)`.
pub fn dense_forward(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    check(input, params)?;
    let n = input.batch();
    let inp = params.in_channels();
    let out = params.out_channels();
    let mut y = Tensor::zeros([n, out, 1, 1]);
    for i in 0..n {
        y.item_mut(i).copy_from_slice(&params.bias);
    }
    // Y (n × out) += X (n × in) · Wᵀ (in × out)
    gemm_rowmajor(
        n,
        inp,
        out,
        input.data(),
        (inp as isize, 1),
        params.weights.data(),
        (1, inp as isize),
        1.0,
        y.data_mut(),
    );
    Ok(y)
}

/// Accumulates weight/bias gradients and returns the input gradient, shaped
/// like `input`.
pub fn dense_backward(input: &Tensor, params: &mut LayerParams, grad_output: &Tensor) -> Result<Tensor> {
    check(input, params)?;
    let n = input.batch();
    let inp = params.in_channels();
    let out = params.out_channels();
    grad_output.expect_shape([n, out, 1, 1], "dense_backward")?;

    for i in 0..n {
        for (gb, g) in params.grad_bias.iter_mut().zip(grad_output.item(i)) {
            *gb += g;
        }
    }
    // dW (out × in) += Gᵀ (out × n) · X (n × in)
    gemm_rowmajor(
        out,
        n,
        inp,
        grad_output.data(),
        (1, out as isize),
        input.data(),
        (inp as isize, 1),
        1.0,
        params.grad_weights.data_mut(),
    );
    // dX (n × in) = G (n × out) · W (out × in)
    let mut grad_input = Tensor::zeros(input.shape());
    gemm_rowmajor(
        n,
        out,
        inp,
        grad_output.data(),
        (out as isize, 1),
        params.weights.data(),
        (inp as isize, 1),
        0.0,
        grad_input.data_mut(),
    );
    Ok(grad_input)
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub params: LayerParams,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new(params: LayerParams) -> Result<Self> {
        if params.kernel() != 1 {
            return Err(Error::invalid("dense weights must be shaped (out, in, 1, 1)"));
        }
        Ok(Self {
            params,
            cache: None,
        })
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let y = dense_forward(input, &self.params)?;
        self.cache = Some(input.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("dense"))?;
        dense_backward(input, &mut self.params, grad_output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::from_vec([rows, cols, 1, 1], v.to_vec()).unwrap()
    }

    #[test]
    fn identity_weights() {
        let p = LayerParams::from_parts(matrix(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]), vec![0.0; 3])
            .unwrap();
        let x = Tensor::from_vec([2, 3, 1, 1], vec![1., -2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap().data(), x.data());
    }

    #[test]
    fn zero_input_gives_bias() {
        let p = LayerParams::from_parts(matrix(2, 3, &[1., 2., 3., 4., 5., 6.]), vec![0.25, -1.5]).unwrap();
        let y = dense_forward(&Tensor::zeros([1, 3, 1, 1]), &p).unwrap();
        assert_eq!(y.data(), &[0.25, -1.5]);
    }

    #[test]
    fn two_by_two_hand_case() {
        // [[1, 2], [3, 4]]·[5, 6] + [0.5, -0.5] = [17.5, 38.5]
        let p = LayerParams::from_parts(matrix(2, 2, &[1., 2., 3., 4.]), vec![0.5, -0.5]).unwrap();
        let x = Tensor::from_vec([1, 2, 1, 1], vec![5., 6.]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap().data(), &[17.5, 38.5]);
    }

    #[test]
    fn flattens_spatial_input() {
        let p = LayerParams::from_parts(matrix(1, 4, &[1., 1., 1., 1.]), vec![0.0]).unwrap();
        let x = Tensor::image(2, 2, vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap().data(), &[10.0]);
    }

    #[test]
    fn feature_mismatch() {
        let p = LayerParams::zeros(2, 3, 1);
        let err = dense_forward(&Tensor::zeros([1, 4, 1, 1]), &p).unwrap_err();
        assert!(err.to_string().contains("input features"));
    }

    #[test]
    fn backward_hand_case() {
        let mut p = LayerParams::from_parts(matrix(2, 2, &[1., 2., 3., 4.]), vec![0.0; 2]).unwrap();
        let x = Tensor::from_vec([1, 2, 1, 1], vec![5., 6.]).unwrap();
        let g = Tensor::from_vec([1, 2, 1, 1], vec![1., -1.]).unwrap();
        let gi = dense_backward(&x, &mut p, &g).unwrap();
        // Wᵀg = [1 - 3, 2 - 4]
        assert_eq!(gi.data(), &[-2., -2.]);
        assert_eq!(p.grad_weights.data(), &[5., 6., -5., -6.]);
        assert_eq!(p.grad_bias, vec![1., -1.]);
    }
}
