//! The Lee local-statistics filter in its multiplicative-noise form.
//!
//! For each pixel, with window mean `m` and variance `v` and speckle variance
//! `n`, the signal variance is estimated as `max(0, (v − m²n)/(1 + n))` and
//! the output is `m + k(z − m)` with gain `k = vx / (vx + m²n)`. Borders are
//! edge-replicated.

use crate::error::{Error, Result};
use crate::model::Despeckler;
use crate::tensor::Tensor;

pub const DEFAULT_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeeParams {
    /// Odd window side.
    pub window: usize,
    /// Variance of the unit-mean speckle, σ².
    pub noise_var: f64,
}

impl LeeParams {
    pub fn new(window: usize, noise_var: f64) -> Result<Self> {
        let p = Self { window, noise_var };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!("Lee window must be odd, got {}", self.window)));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be non-negative, got {}", self.noise_var)));
        }
        Ok(())
    }
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn filter_plane(src: &[f64], h: usize, w: usize, params: &LeeParams, out: &mut [f64]) {
    let r = (params.window / 2) as isize;
    let count = (params.window * params.window) as f64;
    let nv = params.noise_var;
    let mut patch = Vec::with_capacity(params.window * params.window);
    for y in 0..h {
        for x in 0..w {
            patch.clear();
            for dy in -r..=r {
                let row = clamp_index(y as isize + dy, h) * w;
                for dx in -r..=r {
                    patch.push(src[row + clamp_index(x as isize + dx, w)]);
                }
            }
            // mean taken relative to the centre pixel so flat windows are exact
            let z = src[y * w + x];
            let m = z + patch.iter().map(|p| p - z).sum::<f64>() / count;
            let v = patch.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / count;
            let noise = m * m * nv;
            let vx = ((v - noise) / (1.0 + nv)).max(0.0);
            let denom = vx + noise;
            let k = if denom == 0.0 { 0.0 } else { vx / denom };
            out[y * w + x] = m + k * (z - m);
        }
    }
}

/// Filter every image of a single-channel batch.
pub fn lee_filter(z: &Tensor, params: &LeeParams) -> Result<Tensor> {
    params.validate()?;
    if z.channels() != 1 {
        return Err(Error::DimensionMismatch {
            op: "lee_filter",
            dim: "channels",
            expected: 1,
            actual: z.channels(),
        });
    }
    if z.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("Lee filter input has negative values"));
    }
    let (h, w) = (z.height(), z.width());
    let mut out = Tensor::zeros(z.shape());
    for n in 0..z.batch() {
        filter_plane(z.item(n), h, w, params, out.item_mut(n));
    }
    Ok(out)
}

/// Speckle variance `var / mean²` measured over a homogeneous rectangle
/// `(top, left, height, width)` of the first image.
pub fn estimate_noise_var(z: &Tensor, region: (usize, usize, usize, usize)) -> Result<f64> {
    let (top, left, rh, rw) = region;
    if rh == 0 || rw == 0 || top + rh > z.height() || left + rw > z.width() {
        return Err(Error::invalid(format!("region {region:?} outside {}×{} image", z.height(), z.width())));
    }
    let values: Vec<f64> = (top..top + rh)
        .flat_map(|y| (left..left + rw).map(move |x| (y, x)))
        .map(|(y, x)| z.get(0, 0, y, x))
        .collect();
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if m <= 0.0 {
        return Err(Error::invalid("region mean must be positive"));
    }
    let v = values.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / n;
    Ok(v / (m * m))
}

/// Lee filter as an evaluation method. Without a fixed variance it uses the
/// true σ² of each evaluation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeeFilter {
    pub window: usize,
    pub noise_var: Option<f64>,
}

impl Default for LeeFilter {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            noise_var: None,
        }
    }
}

impl Despeckler for LeeFilter {
    fn label(&self) -> String {
        "lee".into()
    }

    fn despeckle(&self, noisy: &Tensor, sigma: f64) -> Result<Tensor> {
        let params = LeeParams::new(self.window, self.noise_var.unwrap_or(sigma * sigma))?;
        lee_filter(noisy, &params)
    }
}
