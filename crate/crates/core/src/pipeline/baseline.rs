use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Bitmap, RgbImage};
use crate::mask::{coverage_fraction, elevation_cutoff_mask};

/// Share of the panorama covered by the fixed band that a plane-agnostic
/// system processes.
pub const STATIC_BAND_FRACTION: f64 = 0.66;

#[derive(Debug, Error, PartialEq)]
#[error("mask a is {a_w}x{a_h} but mask b is {b_w}x{b_h}")]
pub struct BaselineError {
    pub a_w: usize,
    pub a_h: usize,
    pub b_w: usize,
    pub b_h: usize,
}

/// Full-width band of `round(fraction·H)` rows whose bottom edge meets the
/// ego region below `cutoff_deg`, shifted up if it would leave the image.
pub fn static_band_mask(width: usize, height: usize, fraction: f64, cutoff_deg: f64) -> Bitmap {
    let ego = elevation_cutoff_mask(cutoff_deg, width, height);
    let ego_rows = (0..height).rev().take_while(|&v| ego.get(0, v)).count();
    let rows = ((fraction * height as f64).round() as usize).min(height);
    let bottom = (height - ego_rows).max(rows);
    let mut mask = Bitmap::new(width, height);
    for u in 0..width {
        mask.fill_column(u, bottom - rows..bottom, true);
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub width: usize,
    pub height: usize,
    pub coverage_a: f64,
    pub coverage_b: f64,
    /// Smaller coverage over larger; 1.0 when both masks are empty.
    pub ratio: f64,
    /// `coverage_a / coverage_b`, absent when `b` is empty.
    pub a_over_b: Option<f64>,
    pub only_a_pixels: usize,
    pub only_b_pixels: usize,
    pub both_pixels: usize,
}

/// Coverage comparison and a difference image: white where both masks are
/// set, red for `a` only, blue for `b` only, black elsewhere.
pub fn compare_baseline(a: &Bitmap, b: &Bitmap) -> Result<(BaselineReport, RgbImage), BaselineError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(BaselineError {
            a_w: a.width(),
            a_h: a.height(),
            b_w: b.width(),
            b_h: b.height(),
        });
    }
    let (width, height) = (a.width(), a.height());
    let mut diff = Vec::with_capacity(width * height * 3);
    let (mut only_a, mut only_b, mut both) = (0, 0, 0);
    for (&pa, &pb) in a.bits().iter().zip(b.bits()) {
        let px = match (pa, pb) {
            (true, true) => {
                both += 1;
                [255, 255, 255]
            }
            (true, false) => {
                only_a += 1;
                [255, 0, 0]
            }
            (false, true) => {
                only_b += 1;
                [0, 0, 255]
            }
            (false, false) => [0, 0, 0],
        };
        diff.extend_from_slice(&px);
    }
    let (ca, cb) = (coverage_fraction(a), coverage_fraction(b));
    let hi = ca.max(cb);
    let report = BaselineReport {
        width,
        height,
        coverage_a: ca,
        coverage_b: cb,
        ratio: if hi == 0.0 { 1.0 } else { ca.min(cb) / hi },
        a_over_b: (cb > 0.0).then(|| ca / cb),
        only_a_pixels: only_a,
        only_b_pixels: only_b,
        both_pixels: both,
    };
    let image = RgbImage::from_raw(width, height, diff).expect("one pixel per bit");
    Ok((report, image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_band_sits_on_the_ego_region() {
        let m = static_band_mask(4096, 2048, STATIC_BAND_FRACTION, -62.0);
        assert_eq!(m.row_bounds(), Some((1729 - 1352, 1728)));
        assert!((coverage_fraction(&m) - 1352.0 / 2048.0).abs() < 1e-12);
    }

    #[test]
    fn identical_masks_have_ratio_one() {
        let m = static_band_mask(64, 32, 0.5, -62.0);
        let (r, diff) = compare_baseline(&m, &m).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.only_a_pixels + r.only_b_pixels, 0);
        assert_eq!(diff.get(0, 20), [255, 255, 255]);
    }

    #[test]
    fn empty_versus_full_has_ratio_zero() {
        let empty = Bitmap::new(64, 32);
        let full = static_band_mask(64, 32, 1.0, -90.0);
        assert_eq!(compare_baseline(&empty, &full).unwrap().0.ratio, 0.0);
        assert_eq!(compare_baseline(&full, &empty).unwrap().0.ratio, 0.0);
        assert_eq!(compare_baseline(&empty, &empty).unwrap().0.ratio, 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(compare_baseline(&Bitmap::new(4, 2), &Bitmap::new(8, 4)).is_err());
    }
}
