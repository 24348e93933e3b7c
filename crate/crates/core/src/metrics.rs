//! Full-reference image quality: MSE, PSNR and SSIM on `[0, 1]` images.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// PSNR reported for identical images.
pub const DEFAULT_PSNR_CAP: f64 = 100.0;

const GAUSSIAN_SIZE: usize = 11;
const GAUSSIAN_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("{width}x{height} image is smaller than the {window}x{window} window")]
    WindowTooLarge {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("invalid ssim constants: c1 and c2 must be positive")]
    InvalidConstants,
    #[error("cannot read {path}: {message}")]
    Load { path: String, message: String },
}

/// Row-major, channel-interleaved image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f64>,
    ) -> Result<Self, MetricError> {
        if width == 0 || height == 0 {
            return Err(MetricError::InvalidImage(
                "width and height must be positive".into(),
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(MetricError::InvalidImage(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(MetricError::InvalidImage(format!(
                "expected {expected} samples, got {}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MetricError::InvalidImage(format!(
                "sample {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: f64,
    ) -> Result<Self, MetricError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Load an 8-bit PNG. Grey images keep one channel, everything else is
    /// converted to RGB; alpha is dropped. Samples are scaled by `1/255`.
    pub fn from_png(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let path = path.as_ref();
        let load_err = |message: String| MetricError::Load {
            path: path.display().to_string(),
            message,
        };
        let img = image::open(path).map_err(|e| load_err(e.to_string()))?;
        let grey = matches!(
            img.color(),
            image::ColorType::L8
                | image::ColorType::La8
                | image::ColorType::L16
                | image::ColorType::La16
        );
        let (w, h, channels, raw) = if grey {
            let g = img.to_luma8();
            (g.width(), g.height(), 1, g.into_raw())
        } else {
            let c = img.to_rgb8();
            (c.width(), c.height(), 3, c.into_raw())
        };
        let pixels = raw.into_iter().map(|v| f64::from(v) / 255.0).collect();
        Self::new(w as usize, h as usize, channels, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }
}

fn same_shape(a: &Image, b: &Image) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.pixels.len() as f64)
}

/// `10 log10(1 / mse)`; `cap` when the images are identical.
pub fn psnr_from_mse(mse: f64, cap: f64) -> f64 {
    if mse <= 0.0 {
        cap
    } else {
        (10.0 * (1.0 / mse).log10()).min(cap)
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricError> {
    psnr_with_cap(a, b, DEFAULT_PSNR_CAP)
}

pub fn psnr_with_cap(a: &Image, b: &Image, cap: f64) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?, cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// One statistic over the whole image.
    Global,
    /// Mean of local statistics under an 11x11 Gaussian (sigma 1.5),
    /// over window positions fully inside the image.
    #[default]
    Gaussian11x11,
}

impl std::str::FromStr for SsimWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(Self::Global),
            "gaussian_11x11" | "gaussian" => Ok(Self::Gaussian11x11),
            other => Err(format!(
                "unknown ssim window `{other}` (global or gaussian_11x11)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    pub window: SsimWindow,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            window: SsimWindow::Gaussian11x11,
        }
    }
}

impl SsimConfig {
    pub fn global() -> Self {
        Self {
            window: SsimWindow::Global,
            ..Self::default()
        }
    }
}

/// Normalized 2-d Gaussian weights, row-major.
fn gaussian_window() -> Vec<f64> {
    let r = (GAUSSIAN_SIZE / 2) as f64;
    let taps: Vec<f64> = (0..GAUSSIAN_SIZE)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / total).collect();
    let mut w = Vec::with_capacity(GAUSSIAN_SIZE * GAUSSIAN_SIZE);
    for ty in &taps {
        for tx in &taps {
            w.push(ty * tx);
        }
    }
    w
}

/// Weighted mean, variances and covariance of two sample sets.
///
/// Variances go through the same expression as the covariance so that
/// identical inputs give a ratio of exactly one.
fn moments(a: &[f64], b: &[f64], w: &[f64]) -> (f64, f64, f64, f64, f64) {
    let mu_a: f64 = a.iter().zip(w).map(|(x, w)| w * x).sum();
    let mu_b: f64 = b.iter().zip(w).map(|(x, w)| w * x).sum();
    let co = |p: &[f64], mp: f64, q: &[f64], mq: f64| -> f64 {
        p.iter()
            .zip(q)
            .zip(w)
            .map(|((x, y), w)| w * (x - mp) * (y - mq))
            .sum()
    };
    (
        mu_a,
        mu_b,
        co(a, mu_a, a, mu_a),
        co(b, mu_b, b, mu_b),
        co(a, mu_a, b, mu_b),
    )
}

fn ssim_ratio(cfg: &SsimConfig, (mu_a, mu_b, var_a, var_b, cov): (f64, f64, f64, f64, f64)) -> f64 {
    let num = (2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2);
    let den = (mu_a * mu_a + mu_b * mu_b + cfg.c1) * (var_a + var_b + cfg.c2);
    num / den
}

pub fn ssim(a: &Image, b: &Image, cfg: &SsimConfig) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    if !(cfg.c1 > 0.0 && cfg.c2 > 0.0) {
        return Err(MetricError::InvalidConstants);
    }
    let (w, h, ch) = a.shape();
    let mut total = 0.0;
    match cfg.window {
        SsimWindow::Global => {
            let n = (w * h) as f64;
            let weights = vec![1.0 / n; w * h];
            for c in 0..ch {
                let pa: Vec<f64> = a.pixels.iter().skip(c).step_by(ch).copied().collect();
                let pb: Vec<f64> = b.pixels.iter().skip(c).step_by(ch).copied().collect();
                total += ssim_ratio(cfg, moments(&pa, &pb, &weights));
            }
        }
        SsimWindow::Gaussian11x11 => {
            if w < GAUSSIAN_SIZE || h < GAUSSIAN_SIZE {
                return Err(MetricError::WindowTooLarge {
                    width: w,
                    height: h,
                    window: GAUSSIAN_SIZE,
                });
            }
            let weights = gaussian_window();
            let mut pa = vec![0.0; weights.len()];
            let mut pb = vec![0.0; weights.len()];
            for c in 0..ch {
                let mut sum = 0.0;
                let mut count = 0usize;
                for y0 in 0..=h - GAUSSIAN_SIZE {
                    for x0 in 0..=w - GAUSSIAN_SIZE {
                        for dy in 0..GAUSSIAN_SIZE {
                            for dx in 0..GAUSSIAN_SIZE {
                                let i = dy * GAUSSIAN_SIZE + dx;
                                pa[i] = a.at(x0 + dx, y0 + dy, c);
                                pb[i] = b.at(x0 + dx, y0 + dy, c);
                            }
                        }
                        sum += ssim_ratio(cfg, moments(&pa, &pb, &weights));
                        count += 1;
                    }
                }
                total += sum / count as f64;
            }
        }
    }
    Ok(total / ch as f64)
}

/// All three metrics for one pair, as printed by `eval-metrics`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn evaluate_pair(a: &Image, b: &Image, cfg: &SsimConfig) -> Result<MetricReport, MetricError> {
    let mse = mse(a, b)?;
    Ok(MetricReport {
        mse,
        psnr: psnr_from_mse(mse, DEFAULT_PSNR_CAP),
        ssim: ssim(a, b, cfg)?,
    })
}
