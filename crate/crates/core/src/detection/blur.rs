use serde::{Deserialize, Serialize};

use super::DetectionRecord;
use crate::image::RgbImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurParams {
    /// Gaussian σ as a fraction of the shorter box side.
    pub sigma_frac: f64,
    /// Dilation of each box before blurring, in pixels.
    pub pad_px: usize,
    /// Detections scoring below this are left untouched.
    pub score_threshold: f64,
}

impl Default for BlurParams {
    fn default() -> Self {
        Self {
            sigma_frac: 0.35,
            pad_px: 4,
            score_threshold: 0.3,
        }
    }
}

impl BlurParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma_frac > 0.0 && self.sigma_frac.is_finite()) {
            return Err(format!("sigma_frac must be positive, got {}", self.sigma_frac));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(format!(
                "score_threshold must lie in [0, 1], got {}",
                self.score_threshold
            ));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian truncated at `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Gaussian-blurs every detection scoring at least the threshold. Samples wrap
/// horizontally across the seam and clamp at the top and bottom rows; only
/// pixels inside the dilated boxes change.
pub fn blur_regions(image: &RgbImage, detections: &[DetectionRecord], params: &BlurParams) -> RgbImage {
    let mut out = image.clone();
    for det in detections.iter().filter(|d| d.score >= params.score_threshold) {
        let b = det.bbox.normalized(image.width() as f64);
        let sigma = params.sigma_frac * b.width().min(b.height());
        if !(sigma > 0.0) {
            continue;
        }
        let pad = params.pad_px as isize;
        let u0 = b.u_min.floor() as isize - pad;
        let u1 = b.u_max.ceil() as isize + pad;
        let v0 = (b.v_min.floor() as isize - pad).max(0);
        let v1 = (b.v_max.ceil() as isize + pad).min(image.height() as isize);
        if v0 >= v1 {
            continue;
        }
        let u1 = u1.min(u0 + image.width() as isize);
        blur_window(&mut out, u0, u1, v0, v1, &gaussian_kernel(sigma));
    }
    out
}

/// Separable convolution of columns `[u0, u1)` (taken modulo the width) and
/// rows `[v0, v1)`, written back in place.
fn blur_window(image: &mut RgbImage, u0: isize, u1: isize, v0: isize, v1: isize, kernel: &[f64]) {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let r = (kernel.len() / 2) as isize;
    let cols = (u1 - u0) as usize;
    let rows_src = (v1 - v0 + 2 * r) as usize;

    // Horizontal pass over the rows the vertical pass will need.
    let mut horizontal = vec![[0f64; 3]; rows_src * cols];
    for (ri, y) in (v0 - r..v1 + r).enumerate() {
        let y = y.clamp(0, h - 1) as usize;
        for ci in 0..cols {
            let x = u0 + ci as isize;
            let mut acc = [0f64; 3];
            for (k, wgt) in kernel.iter().enumerate() {
                let xs = (x + k as isize - r).rem_euclid(w) as usize;
                let px = image.get(xs, y);
                for c in 0..3 {
                    acc[c] += wgt * px[c] as f64;
                }
            }
            horizontal[ri * cols + ci] = acc;
        }
    }

    for (oi, y) in (v0..v1).enumerate() {
        for ci in 0..cols {
            let mut acc = [0f64; 3];
            for (k, wgt) in kernel.iter().enumerate() {
                let src = horizontal[(oi + k) * cols + ci];
                for c in 0..3 {
                    acc[c] += wgt * src[c];
                }
            }
            let x = (u0 + ci as isize).rem_euclid(w) as usize;
            let px = acc.map(|v| v.round().clamp(0.0, 255.0) as u8);
            image.set(x, y as usize, px);
        }
    }
}
