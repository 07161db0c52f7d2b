//! Procedural scenes standing in for a multi-temporal stack of acquisitions
//! over one site.
//!
//! A site is an irregular grid of rectangular parcels with fixed base
//! reflectances. Each acquisition jitters every parcel's level and adds a few
//! faint Gaussian blobs, so images share structure but no two are identical.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteConfig {
    pub side: usize,
    /// Parcels per row and per column.
    pub parcels: usize,
    /// Parcel boundaries stay at least this far from the image border.
    pub margin: usize,
    /// Base parcel levels are uniform in this range.
    pub base_range: (f64, f64),
    /// Per-acquisition parcel perturbation is uniform in `±jitter`.
    pub jitter: f64,
    pub parcel_clip: (f64, f64),
    /// Inclusive range of blob counts per acquisition.
    pub blobs: (usize, usize),
    pub blob_amplitude: f64,
    /// Blob radius range as a fraction of the image side.
    pub blob_radius: (f64, f64),
    pub clip: (f64, f64),
}

impl Default for SiteConfig {
    fn default() -> Self {
        Self {
            side: 64,
            parcels: 6,
            margin: 6,
            base_range: (0.2, 0.8),
            jitter: 0.1,
            parcel_clip: (0.1, 0.9),
            blobs: (2, 4),
            blob_amplitude: 0.05,
            blob_radius: (0.03, 0.08),
            clip: (0.05, 0.95),
        }
    }
}

impl SiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parcels == 0 {
            return Err(Error::invalid("site needs at least one parcel"));
        }
        if self.side < 2 || 2 * self.margin >= self.side {
            return Err(Error::invalid(format!(
                "margin {} too large for side {}",
                self.margin, self.side
            )));
        }
        if self.side - 2 * self.margin < self.parcels - 1 {
            return Err(Error::invalid("too many parcels for the available cut positions"));
        }
        if self.blobs.0 > self.blobs.1 {
            return Err(Error::invalid("blob count range is reversed"));
        }
        if !(0.0..=1.0).contains(&self.clip.0) || !(self.clip.0..=1.0).contains(&self.clip.1) {
            return Err(Error::invalid("output clip range must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// The fixed layout shared by every acquisition of a site.
#[derive(Debug, Clone)]
pub struct Site {
    config: SiteConfig,
    cuts_x: Vec<usize>,
    cuts_y: Vec<usize>,
    base: Vec<f64>,
}

fn parcel_cuts(config: &SiteConfig, rng: &mut SeededRng) -> Vec<usize> {
    let mut candidates: Vec<usize> = (config.margin..config.side - config.margin).collect();
    rng.shuffle(&mut candidates);
    let mut cuts = vec![0, config.side];
    cuts.extend_from_slice(&candidates[..config.parcels - 1]);
    cuts.sort_unstable();
    cuts
}

impl Site {
    pub fn new(config: SiteConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let cuts_x = parcel_cuts(&config, &mut rng);
        let cuts_y = parcel_cuts(&config, &mut rng);
        let (lo, hi) = config.base_range;
        let base = (0..config.parcels * config.parcels)
            .map(|_| rng.uniform_range(lo, hi))
            .collect();
        Ok(Self {
            config,
            cuts_x,
            cuts_y,
            base,
        })
    }

    pub fn config(&self) -> &SiteConfig {
        &self.config
    }

    /// One acquisition as a `(1, 1, side, side)` image.
    pub fn acquisition(&self, rng: &mut SeededRng) -> Tensor {
        let c = &self.config;
        let n = c.side;
        let p = c.parcels;
        let mut img = Tensor::zeros([1, 1, n, n]);
        let px = img.data_mut();
        for i in 0..p {
            for j in 0..p {
                let v = (self.base[i * p + j] + rng.uniform_range(-c.jitter, c.jitter))
                    .clamp(c.parcel_clip.0, c.parcel_clip.1);
                for y in self.cuts_y[i]..self.cuts_y[i + 1] {
                    px[y * n + self.cuts_x[j]..y * n + self.cuts_x[j + 1]].fill(v);
                }
            }
        }
        let count = c.blobs.0 + rng.below(c.blobs.1 - c.blobs.0 + 1);
        let scale = (n - 1) as f64;
        for _ in 0..count {
            let cx = rng.uniform();
            let cy = rng.uniform();
            let r = rng.uniform_range(c.blob_radius.0, c.blob_radius.1);
            let amp = rng.uniform_range(-c.blob_amplitude, c.blob_amplitude);
            let denom = 2.0 * r * r;
            for y in 0..n {
                let dy = y as f64 / scale - cy;
                for x in 0..n {
                    let dx = x as f64 / scale - cx;
                    px[y * n + x] += amp * (-(dx * dx + dy * dy) / denom).exp();
                }
            }
        }
        for v in px.iter_mut() {
            *v = v.clamp(c.clip.0, c.clip.1);
        }
        img
    }
}

/// `count` acquisitions of one site. Image `i` depends only on `seed` and
/// `i`, so a longer series extends a shorter one.
pub fn site_series(config: &SiteConfig, count: usize, seed: u64) -> Result<Vec<Tensor>> {
    let site = Site::new(config.clone(), seed)?;
    Ok((0..count)
        .map(|i| site.acquisition(&mut SeededRng::new(derive_seed(seed, i as u64 + 1))))
        .collect())
}
