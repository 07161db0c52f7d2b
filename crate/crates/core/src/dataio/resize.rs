use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIDE: usize = 64;

/// Sample position in the source for output index `i` with corners aligned.
fn source_coord(i: usize, out: usize, src: usize) -> (usize, f64) {
    if out == 1 {
        return (0, 0.0);
    }
    let pos = i as f64 * (src - 1) as f64 / (out - 1) as f64;
    let lo = (pos.floor() as usize).min(src - 1);
    (lo, pos - lo as f64)
}

/// `a + t(b − a)`, kept inside `[min(a, b), max(a, b)]`.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

/// Bilinear resize of every plane with corner-aligned sampling.
pub fn resize(image: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (h, w) = (image.height(), image.width());
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("cannot resize a {h}×{w} image")));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    let planes = image.batch() * image.channels();
    let mut out = Tensor::zeros([image.batch(), image.channels(), height, width]);
    let cols: Vec<(usize, f64)> = (0..width).map(|x| source_coord(x, width, w)).collect();
    for p in 0..planes {
        let src = &image.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out.data_mut()[p * height * width..(p + 1) * height * width];
        for y in 0..height {
            let (y0, ty) = source_coord(y, height, h);
            let y1 = (y0 + 1).min(h - 1);
            for (x, &(x0, tx)) in cols.iter().enumerate() {
                let x1 = (x0 + 1).min(w - 1);
                let top = lerp(src[y0 * w + x0], src[y0 * w + x1], tx);
                let bottom = lerp(src[y1 * w + x0], src[y1 * w + x1], tx);
                dst[y * width + x] = lerp(top, bottom, ty);
            }
        }
    }
    Ok(out)
}

pub fn resize_to_64(image: &Tensor) -> Result<Tensor> {
    if image.height() == SIDE && image.width() == SIDE {
        return Ok(image.clone());
    }
    resize(image, SIDE, SIDE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn identity_at_native_size() {
        let mut rng = SeededRng::new(1);
        let img = Tensor::image(64, 64, (0..4096).map(|_| rng.uniform()).collect()).unwrap();
        assert_eq!(resize_to_64(&img).unwrap(), img);
        assert_eq!(resize(&img, 64, 64).unwrap(), img);
    }

    #[test]
    fn constants_survive_exactly() {
        for (h, w) in [(2, 2), (17, 33), (128, 128), (200, 90)] {
            let img = Tensor::full([1, 1, h, w], 0.3);
            let out = resize_to_64(&img).unwrap();
            assert_eq!(out.shape(), [1, 1, 64, 64]);
            assert!(out.data().iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn ramp_matches_direct_bilinear() {
        let n = 128;
        let img = Tensor::image(n, n, (0..n * n).map(|i| ((i / n) + (i % n)) as f64 / (2 * (n - 1)) as f64).collect())
            .unwrap();
        let out = resize_to_64(&img).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                // on a linear ramp bilinear interpolation is exact
                let sy = y as f64 * 127.0 / 63.0;
                let sx = x as f64 * 127.0 / 63.0;
                let expected = (sy + sx) / 254.0;
                assert!((out.get(0, 0, y, x) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stays_in_unit_range() {
        let mut rng = SeededRng::new(2);
        let img = Tensor::image(37, 91, (0..37 * 91).map(|_| rng.uniform()).collect()).unwrap();
        let out = resize_to_64(&img).unwrap();
        assert!(out.min() >= 0.0 && out.max() <= 1.0);
    }

    #[test]
    fn degenerate_input() {
        assert!(resize_to_64(&Tensor::zeros([1, 1, 1, 10])).is_err());
    }
}
