//! Stride-1, zero "same"-padded 2-D convolution.
//!
//! Forward unfolds each image into a `(in_ch·k·k, h·w)` column matrix and
//! multiplies by the `(out_ch, in_ch·k·k)` weight matrix. Backward multiplies
//! the output gradient by the transposed weights and folds the columns back,
//! which is the full convolution of the output gradient with 180°-rotated
//! kernels.

use super::LayerParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_kernel(params: &LayerParams) -> Result<()> {
    let [_, _, kh, kw] = params.weights.shape();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::invalid(format!(
            "conv kernel must be square with odd side, got {kh}x{kw}"
        )));
    }
    Ok(())
}

fn check_input(input: &Tensor, params: &LayerParams) -> Result<()> {
    check_kernel(params)?;
    if input.channels() != params.in_channels() {
        return Err(Error::DimensionMismatch {
            op: "conv2d",
            dim: "input channels",
            expected: params.in_channels(),
            actual: input.channels(),
        });
    }
    Ok(())
}

/// Unfold one `(c, h, w)` image into rows indexed by `(c, ky, kx)` and columns
/// by output pixel.
fn im2col(image: &[f64], channels: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for c in 0..channels {
        let plane = &image[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, o) in out.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *o = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add the column matrix back onto a `(c, h, w)` gradient image.
fn col2im(cols: &[f64], channels: usize, h: usize, w: usize, k: usize, image: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut image[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let row_src = &src[y * w..(y + 1) * w];
                    for (x, &g) in row_src.iter().enumerate() {
                        let sx = x as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// `c (m×n) = a (m×k)·b (k×n) + beta·c`, row-major with explicit strides
/// for `a` and `b` so transposed views need no copy.
#[allow(clippy::too_many_arguments)]
pub(super) fn gemm_rowmajor(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every index reachable through the given
    // dimensions and strides (checked by the callers' shape logic).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward convolution: output `(n, out_ch, h, w)`.
pub fn conv2d_forward(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    check_input(input, params)?;
    let [n, c, h, w] = input.shape();
    let k = params.kernel();
    let out_ch = params.out_channels();
    let hw = h * w;
    let ckk = c * k * k;

    let mut output = Tensor::zeros([n, out_ch, h, w]);
    let mut cols = vec![0.0; ckk * hw];
    for i in 0..n {
        im2col(input.item(i), c, h, w, k, &mut cols);
        let out = output.item_mut(i);
        for (o, &b) in params.bias.iter().enumerate() {
            out[o * hw..(o + 1) * hw].fill(b);
        }
        gemm_rowmajor(
            out_ch,
            ckk,
            hw,
            params.weights.data(),
            (ckk as isize, 1),
            &cols,
            (hw as isize, 1),
            1.0,
            out,
        );
    }
    Ok(output)
}

/// Backward convolution. Accumulates into `params.grad_weights` and
/// `params.grad_bias` and returns the input gradient.
pub fn conv2d_backward(
    input: &Tensor,
    params: &mut LayerParams,
    grad_output: &Tensor,
) -> Result<Tensor> {
    check_input(input, params)?;
    let [n, c, h, w] = input.shape();
    let k = params.kernel();
    let out_ch = params.out_channels();
    grad_output.expect_shape([n, out_ch, h, w], "conv2d_backward")?;
    let hw = h * w;
    let ckk = c * k * k;

    let mut grad_input = Tensor::zeros(input.shape());
    let mut cols = vec![0.0; ckk * hw];
    let mut grad_cols = vec![0.0; ckk * hw];
    for i in 0..n {
        let g = grad_output.item(i);
        for (o, gb) in params.grad_bias.iter_mut().enumerate() {
            *gb += g[o * hw..(o + 1) * hw].iter().sum::<f64>();
        }

        // dW (out_ch × ckk) += G (out_ch × hw) · colsᵀ (hw × ckk)
        im2col(input.item(i), c, h, w, k, &mut cols);
        gemm_rowmajor(
            out_ch,
            hw,
            ckk,
            g,
            (hw as isize, 1),
            &cols,
            (1, hw as isize),
            1.0,
            params.grad_weights.data_mut(),
        );

        // dcols (ckk × hw) = Wᵀ (ckk × out_ch) · G (out_ch × hw)
        gemm_rowmajor(
            ckk,
            out_ch,
            hw,
            params.weights.data(),
            (1, ckk as isize),
            g,
            (hw as isize, 1),
            0.0,
            &mut grad_cols,
        );
        col2im(&grad_cols, c, h, w, k, grad_input.item_mut(i));
    }
    Ok(grad_input)
}

/// Convolution layer that caches its input for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub params: LayerParams,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(params: LayerParams) -> Result<Self> {
        check_kernel(&params)?;
        Ok(Self {
            params,
            cache: None,
        })
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = conv2d_forward(input, &self.params)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("conv2d"))?;
        conv2d_backward(input, &mut self.params, grad_output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Direct quadruple-loop cross-correlation with zero padding.
    fn naive_conv(input: &Tensor, params: &LayerParams) -> Tensor {
        let [n, c, h, w] = input.shape();
        let k = params.kernel();
        let pad = (k / 2) as isize;
        let oc = params.out_channels();
        let mut out = Tensor::zeros([n, oc, h, w]);
        for b in 0..n {
            for o in 0..oc {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = params.bias[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - pad;
                                    let sx = x as isize + kx as isize - pad;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    acc += params.weights.get(o, ci, ky, kx)
                                        * input.get(b, ci, sy as usize, sx as usize);
                                }
                            }
                        }
                        out.set(b, o, y, x, acc);
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: [usize; 4], rng: &mut SeededRng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.normal()).collect()).unwrap()
    }

    fn random_params(oc: usize, ic: usize, k: usize, rng: &mut SeededRng) -> LayerParams {
        let w = random_tensor([oc, ic, k, k], rng);
        LayerParams::from_parts(w, (0..oc).map(|_| rng.normal()).collect()).unwrap()
    }

    fn grid_3x3() -> Tensor {
        Tensor::image(3, 3, (1..=9).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn zero_input_passes_bias() {
        let mut rng = SeededRng::new(0);
        let mut p = random_params(1, 1, 3, &mut rng);
        p.bias = vec![0.5];
        let out = conv2d_forward(&Tensor::zeros([1, 1, 3, 3]), &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut p = LayerParams::zeros(1, 1, 3);
        p.weights.set(0, 0, 1, 1, 1.0);
        let input = grid_3x3();
        assert_eq!(conv2d_forward(&input, &p).unwrap(), input);
    }

    #[test]
    fn ones_kernel_on_grid() {
        let mut p = LayerParams::zeros(1, 1, 3);
        p.weights.data_mut().fill(1.0);
        let input = grid_3x3();
        let out = conv2d_forward(&input, &p).unwrap();
        let oracle = naive_conv(&input, &p);
        assert_eq!(out.get(0, 0, 1, 1), 45.0);
        // corners: 1+2+4+5, 2+3+5+6, 4+5+7+8, 5+6+8+9
        assert_eq!(out.get(0, 0, 0, 0), 12.0);
        assert_eq!(out.get(0, 0, 0, 2), 16.0);
        assert_eq!(out.get(0, 0, 2, 0), 24.0);
        assert_eq!(out.get(0, 0, 2, 2), 28.0);
        assert_eq!(out, oracle);
    }

    #[test]
    fn matches_naive_reference_on_small_shapes() {
        let mut rng = SeededRng::new(11);
        for n in 1..=2 {
            for c in 1..=3 {
                for (h, w) in [(1, 1), (3, 5), (8, 8), (7, 4)] {
                    for k in [1, 3, 5] {
                        let input = random_tensor([n, c, h, w], &mut rng);
                        let p = random_params(2, c, k, &mut rng);
                        let fast = conv2d_forward(&input, &p).unwrap();
                        let slow = naive_conv(&input, &p);
                        for (a, b) in fast.data().iter().zip(slow.data()) {
                            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_grad_output_gives_zero_gradients() {
        let mut rng = SeededRng::new(2);
        let input = random_tensor([1, 2, 4, 4], &mut rng);
        let mut p = random_params(3, 2, 3, &mut rng);
        let g = Tensor::zeros([1, 3, 4, 4]);
        let gi = conv2d_backward(&input, &mut p, &g).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(p.grad_weights.data().iter().all(|&v| v == 0.0));
        assert!(p.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_kernel_backward_is_identity() {
        let mut rng = SeededRng::new(3);
        let mut p = LayerParams::zeros(1, 1, 3);
        p.weights.set(0, 0, 1, 1, 1.0);
        let input = random_tensor([1, 1, 4, 4], &mut rng);
        let g = random_tensor([1, 1, 4, 4], &mut rng);
        assert_eq!(conv2d_backward(&input, &mut p, &g).unwrap(), g);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(4);
        let input = random_tensor([1, 1, 4, 4], &mut rng);
        let mut p = random_params(1, 1, 3, &mut rng);
        let g = random_tensor([1, 1, 4, 4], &mut rng);
        // loss = <conv(x), g>
        let loss = |x: &Tensor, p: &LayerParams| -> f64 {
            conv2d_forward(x, p)
                .unwrap()
                .data()
                .iter()
                .zip(g.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let gi = conv2d_backward(&input, &mut p, &g).unwrap();
        let eps = 1e-4;
        let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-8);

        for i in 0..input.len() {
            let mut plus = input.clone();
            plus.data_mut()[i] += eps;
            let mut minus = input.clone();
            minus.data_mut()[i] -= eps;
            let fd = (loss(&plus, &p) - loss(&minus, &p)) / (2.0 * eps);
            assert!(rel(gi.data()[i], fd) < 1e-4);
        }
        for i in 0..p.weights.len() {
            let mut plus = p.clone();
            plus.weights.data_mut()[i] += eps;
            let mut minus = p.clone();
            minus.weights.data_mut()[i] -= eps;
            let fd = (loss(&input, &plus) - loss(&input, &minus)) / (2.0 * eps);
            assert!(rel(p.grad_weights.data()[i], fd) < 1e-4);
        }
        let fd_bias = g.sum();
        assert!(rel(p.grad_bias[0], fd_bias) < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let p = LayerParams::zeros(1, 2, 3);
        let err = conv2d_forward(&Tensor::zeros([1, 1, 4, 4]), &p).unwrap_err();
        assert!(err.to_string().contains("input channels"));
    }

    #[test]
    fn even_kernel_is_rejected() {
        assert!(Conv2d::new(LayerParams::zeros(1, 1, 2)).is_err());
    }

    #[test]
    fn backward_before_forward() {
        let mut conv = Conv2d::new(LayerParams::zeros(1, 1, 3)).unwrap();
        let err = conv.backward(&Tensor::zeros([1, 1, 3, 3])).unwrap_err();
        assert!(matches!(err, Error::BackwardBeforeForward(_)));
    }
}
