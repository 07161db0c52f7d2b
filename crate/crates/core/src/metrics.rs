//! Image quality metrics and corpus-level evaluation.
//!
//! PSNR uses a peak of 1.0 since images live in `[0, 1]`. SSIM uses an
//! 11×11 Gaussian window (σ = 1.5) evaluated only where the window fits
//! entirely inside the image.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::model::Despeckler;
use crate::rng::{derive_seed, SeededRng};
use crate::speckle::{apply_speckle, sample_speckle};
use crate::tensor::Tensor;

/// Peak signal-to-noise ratio in dB. Identical images have no finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    /// The dB value, with `Infinite` mapped to `f64::INFINITY`.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Psnr::Finite(_))
    }

    /// Arithmetic mean; infinite if any value is.
    pub fn mean(values: &[Psnr]) -> Psnr {
        let mut sum = 0.0;
        for v in values {
            match v {
                Psnr::Finite(x) => sum += x,
                Psnr::Infinite => return Psnr::Infinite,
            }
        }
        Psnr::Finite(sum / values.len() as f64)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match (self, f.precision()) {
            (Psnr::Finite(v), Some(p)) => format!("{v:.p$}"),
            (Psnr::Finite(v), None) => v.to_string(),
            (Psnr::Infinite, _) => "inf".into(),
        };
        // `pad` would treat the precision as a maximum length
        match f.width() {
            Some(w) => write!(f, "{text:>w$}"),
            None => f.write_str(&text),
        }
    }
}

pub fn mse(reference: &Tensor, test: &Tensor) -> Result<f64> {
    let diff = reference.zip_map(test, "mse", |a, b| (a - b) * (a - b))?;
    if diff.is_empty() {
        return Err(Error::invalid("mse of empty images"));
    }
    Ok(diff.sum() / diff.len() as f64)
}

/// `10·log10(max_val² / MSE)`.
pub fn psnr_with_max(reference: &Tensor, test: &Tensor, max_val: f64) -> Result<Psnr> {
    let err = mse(reference, test)?;
    Ok(if err == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Finite(10.0 * (max_val * max_val / err).log10())
    })
}

pub fn psnr(reference: &Tensor, test: &Tensor) -> Result<Psnr> {
    psnr_with_max(reference, test, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Window side; odd.
    pub window: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of pixel values.
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.gaussian_sigma * self.gaussian_sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.gaussian_sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.data_range > 0.0) {
            return Err(Error::invalid("SSIM constants must be positive"));
        }
        Ok(())
    }
}

/// Valid-mode separable filtering of one `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, params: &SsimParams) -> f64 {
    let taps = params.taps();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(y, h, w, &taps);
    let exx = filter_valid(&xx, h, w, &taps);
    let eyy = filter_valid(&yy, h, w, &taps);
    let exy = filter_valid(&xy, h, w, &taps);
    let (c1, c2) = (params.c1(), params.c2());
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let vx = exx[i] - a * a;
            let vy = eyy[i] - b * b;
            let cov = exy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (vx + vy + c2))
        })
        .sum();
    total / mx.len() as f64
}

/// Mean SSIM over valid window positions, averaged over all planes.
pub fn ssim_with(reference: &Tensor, test: &Tensor, params: &SsimParams) -> Result<f64> {
    params.validate()?;
    test.expect_shape(reference.shape(), "ssim")?;
    let (h, w) = (reference.height(), reference.width());
    if h < params.window || w < params.window {
        return Err(Error::invalid(format!(
            "image {h}×{w} is smaller than the {0}×{0} SSIM window",
            params.window
        )));
    }
    let planes = reference.batch() * reference.channels();
    let plane = h * w;
    let total: f64 = (0..planes)
        .map(|p| {
            let r = p * plane..(p + 1) * plane;
            ssim_plane(&reference.data()[r.clone()], &test.data()[r], h, w, params)
        })
        .sum();
    Ok(total / planes as f64)
}

pub fn ssim(reference: &Tensor, test: &Tensor) -> Result<f64> {
    ssim_with(reference, test, &SsimParams::default())
}

pub const NOISY_LABEL: &str = "Noisy";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub sigma: f64,
    pub psnr: Vec<Psnr>,
    pub ssim: Vec<f64>,
}

impl EvalRow {
    pub fn mean_psnr(&self) -> Psnr {
        Psnr::mean(&self.psnr)
    }

    pub fn mean_ssim(&self) -> f64 {
        self.ssim.iter().sum::<f64>() / self.ssim.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub corpus: String,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, method: &str, sigma: f64) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method && r.sigma == sigma)
    }

    /// `method,sigma,psnr_db,ssim`, one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,sigma,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.2},{:.6},{:.6}", r.method, r.sigma, r.mean_psnr(), r.mean_ssim());
        }
        out
    }

    /// `method,sigma,image,psnr_db,ssim`, one line per image per row.
    pub fn to_per_image_csv(&self) -> String {
        let mut out = String::from("method,sigma,image,psnr_db,ssim\n");
        for r in &self.rows {
            for (i, (p, s)) in r.psnr.iter().zip(&r.ssim).enumerate() {
                let _ = writeln!(out, "{},{:.2},{},{:.6},{:.6}", r.method, r.sigma, i, p, s);
            }
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "corpus {} (seed {})", self.corpus, self.seed)?;
        writeln!(f, "{:<16} {:>6} {:>10} {:>8}", "method", "sigma", "PSNR dB", "SSIM")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:>6.2} {:>10.3} {:>8.4}",
                r.method,
                r.sigma,
                r.mean_psnr(),
                r.mean_ssim()
            )?;
        }
        Ok(())
    }
}

/// Seed of the speckle realization applied to image `index` at `sigma_index`.
pub fn realization_seed(seed: u64, sigma_index: usize, index: usize) -> u64 {
    derive_seed(derive_seed(seed, sigma_index as u64), (index as u64) << 32)
}

/// Scores of the noisy observation and of every method on one image.
fn score_image(
    methods: &[&dyn Despeckler],
    clean: &Tensor,
    sigma: f64,
    seed: u64,
) -> Result<Vec<(Psnr, f64)>> {
    let mut rng = SeededRng::new(seed);
    let noisy = apply_speckle(clean, &sample_speckle(clean.shape(), sigma, &mut rng)?)?;
    let mut out = Vec::with_capacity(methods.len() + 1);
    out.push((psnr(clean, &noisy)?, ssim(clean, &noisy)?));
    for m in methods {
        let estimate = m.despeckle(&noisy, sigma)?;
        out.push((psnr(clean, &estimate)?, ssim(clean, &estimate)?));
    }
    Ok(out)
}

/// Speckle every clean image once per sigma, run every method on the same
/// observations and score against the clean image. Rows come out grouped by
/// sigma, `Noisy` first and then the methods in the order given.
pub fn evaluate_corpus(
    methods: &[&dyn Despeckler],
    clean: &[Tensor],
    sigmas: &[f64],
    seed: u64,
    corpus: &str,
) -> Result<EvalReport> {
    evaluate_corpus_jobs(methods, clean, sigmas, seed, corpus, 1)
}

/// As [`evaluate_corpus`], spreading images over `jobs` threads. The report
/// does not depend on `jobs`.
pub fn evaluate_corpus_jobs(
    methods: &[&dyn Despeckler],
    clean: &[Tensor],
    sigmas: &[f64],
    seed: u64,
    corpus: &str,
    jobs: usize,
) -> Result<EvalReport> {
    if clean.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if clean.iter().any(|c| c.data().iter().any(|v| !(0.0..=1.0).contains(v))) {
        return Err(Error::invalid("clean images must lie in [0, 1]"));
    }
    let jobs = jobs.clamp(1, clean.len());
    let mut rows = Vec::new();
    for (si, &sigma) in sigmas.iter().enumerate() {
        let score = |i: usize| score_image(methods, &clean[i], sigma, realization_seed(seed, si, i));
        let scores: Vec<Vec<(Psnr, f64)>> = if jobs == 1 {
            (0..clean.len()).map(score).collect::<Result<_>>()?
        } else {
            let chunk = clean.len().div_ceil(jobs);
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..clean.len())
                    .step_by(chunk)
                    .map(|start| {
                        let score = &score;
                        scope.spawn(move || {
                            (start..(start + chunk).min(clean.len())).map(score).collect::<Result<Vec<_>>>()
                        })
                    })
                    .collect();
                let mut all = Vec::with_capacity(clean.len());
                for h in handles {
                    all.extend(h.join().expect("evaluation worker panicked")?);
                }
                Ok::<_, Error>(all)
            })?
        };
        let labels = std::iter::once(NOISY_LABEL.to_string()).chain(methods.iter().map(|m| m.label()));
        for (j, method) in labels.enumerate() {
            rows.push(EvalRow {
                method,
                sigma,
                psnr: scores.iter().map(|s| s[j].0).collect(),
                ssim: scores.iter().map(|s| s[j].1).collect(),
            });
        }
    }
    Ok(EvalReport {
        corpus: corpus.to_string(),
        seed,
        rows,
    })
}
