//! Full-resolution processing mask from horizontal-plane inliers.
//!
//! Inliers are painted back into the panorama through their source pixels
//! (one `factor × factor` block each). Per column, the topmost painted row
//! anchors a band that reaches down to the lowest painted row, capped at
//! `band_cap_frac · H` rows, plus a buffer of rows above it for objects that
//! stand on distant ground. Short runs of empty columns are bridged by linear
//! interpolation, wrapping across the seam. The ego-vehicle region is cleared
//! last.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{row_elevation, PointCloud};
use crate::image::{Bitmap, RgbImage};
use crate::io::{read_mask, IoError};
use crate::plane::Plane;

/// Panorama height the default buffer is expressed at (a 2:1 frame of
/// roughly 250 Mpix).
pub const REFERENCE_HEIGHT: usize = 11_180;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("ego mask is {actual_w}x{actual_h}, panorama is {width}x{height}")]
    DimensionMismatch {
        width: usize,
        height: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Ego-vehicle exclusion: everything below an elevation, or a mask file whose
/// non-zero pixels belong to the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EgoSpec {
    Cutoff { elevation_cutoff_deg: f64 },
    File { mask_path: PathBuf },
}

impl Default for EgoSpec {
    fn default() -> Self {
        Self::Cutoff {
            elevation_cutoff_deg: -62.0,
        }
    }
}

fn default_band_cap() -> f64 {
    1.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskParams {
    /// Rows added above the plane boundary, at `reference_height`.
    pub buffer_px: usize,
    /// Scale `buffer_px` by `H / reference_height`.
    pub auto_scale_buffer: bool,
    pub reference_height: usize,
    #[serde(default = "default_band_cap")]
    pub band_cap_frac: f64,
    /// Longest run of empty columns bridged by interpolation.
    pub max_gap_columns: usize,
    pub ego: EgoSpec,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            buffer_px: 350,
            auto_scale_buffer: true,
            reference_height: REFERENCE_HEIGHT,
            band_cap_frac: default_band_cap(),
            max_gap_columns: 50,
            ego: EgoSpec::default(),
        }
    }
}

impl MaskParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.band_cap_frac > 0.0 && self.band_cap_frac <= 1.0) {
            return Err(format!("band_cap_frac must lie in (0, 1], got {}", self.band_cap_frac));
        }
        if self.reference_height == 0 {
            return Err("reference_height must be positive".into());
        }
        if let EgoSpec::Cutoff { elevation_cutoff_deg } = self.ego {
            if !(-90.0..=0.0).contains(&elevation_cutoff_deg) {
                return Err(format!(
                    "elevation_cutoff_deg must lie in [-90, 0], got {elevation_cutoff_deg}"
                ));
            }
        }
        Ok(())
    }

    /// Buffer height in rows for a panorama `height` rows tall.
    pub fn buffer_rows(&self, height: usize) -> usize {
        if self.auto_scale_buffer {
            (self.buffer_px as f64 * height as f64 / self.reference_height as f64).round() as usize
        } else {
            self.buffer_px
        }
    }

    pub fn band_cap_rows(&self, height: usize) -> usize {
        ((self.band_cap_frac * height as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessingMask {
    /// Pixels handed to the detector.
    pub bitmap: Bitmap,
    /// Band grown from the reprojected planes.
    pub plane_region: Bitmap,
    /// Rows added above the band.
    pub buffer_region: Bitmap,
    pub ego_region: Bitmap,
    pub coverage: f64,
}

impl ProcessingMask {
    pub fn width(&self) -> usize {
        self.bitmap.width()
    }

    pub fn height(&self) -> usize {
        self.bitmap.height()
    }
}

/// Paints the `factor × factor` block at each inlier's source pixel.
pub fn reproject_planes(planes: &[Plane], cloud: &PointCloud, factor: usize, width: usize, height: usize) -> Bitmap {
    let mut region = Bitmap::new(width, height);
    let sources = cloud.sources();
    for plane in planes {
        for &i in &plane.inliers {
            let src = sources[i];
            let (u, v) = (src.u as usize, src.v as usize);
            for uu in u..(u + factor).min(width) {
                region.fill_column(uu, v..v + factor, true);
            }
        }
    }
    region
}

/// Rows whose center elevation lies below `cutoff_deg`.
pub fn elevation_cutoff_mask(cutoff_deg: f64, width: usize, height: usize) -> Bitmap {
    let cutoff = cutoff_deg.to_radians();
    let mut mask = Bitmap::new(width, height);
    for v in (0..height).rev() {
        if row_elevation(v as f64, height) >= cutoff {
            break;
        }
        for u in 0..width {
            mask.set(u, v, true);
        }
    }
    mask
}

pub fn ego_mask(params: &MaskParams, width: usize, height: usize) -> Result<Bitmap, MaskError> {
    match &params.ego {
        EgoSpec::Cutoff { elevation_cutoff_deg } => Ok(elevation_cutoff_mask(*elevation_cutoff_deg, width, height)),
        EgoSpec::File { mask_path } => {
            let mask = read_mask(mask_path)?;
            if mask.width() != width || mask.height() != height {
                return Err(MaskError::DimensionMismatch {
                    width,
                    height,
                    actual_w: mask.width(),
                    actual_h: mask.height(),
                });
            }
            Ok(mask)
        }
    }
}

/// Inclusive `(top, bottom)` rows of set bits per column.
fn column_extents(region: &Bitmap) -> Vec<Option<(usize, usize)>> {
    let mut extents: Vec<Option<(usize, usize)>> = vec![None; region.width()];
    for v in 0..region.height() {
        for (u, &bit) in region.row(v).iter().enumerate() {
            if bit {
                extents[u] = Some(match extents[u] {
                    None => (v, v),
                    Some((top, _)) => (top, v),
                });
            }
        }
    }
    extents
}

/// Fills runs of at most `max_gap` empty columns by interpolating between
/// the occupied neighbours, treating the first and last columns as adjacent.
fn bridge_gaps(extents: &mut [Option<(usize, usize)>], max_gap: usize) {
    let w = extents.len();
    let Some(anchor) = extents.iter().position(Option::is_some) else {
        return;
    };
    let mut left = anchor;
    let mut step = 1;
    while step <= w {
        let u = (anchor + step) % w;
        if let Some(right_ext) = extents[u] {
            let gap = (u + w - left - 1) % w;
            if gap > 0 && gap <= max_gap {
                let left_ext = extents[left].expect("occupied");
                for j in 1..=gap {
                    let t = j as f64 / (gap + 1) as f64;
                    let lerp = |a: usize, b: usize| (a as f64 + (b as f64 - a as f64) * t).round() as usize;
                    extents[(left + j) % w] = Some((lerp(left_ext.0, right_ext.0), lerp(left_ext.1, right_ext.1)));
                }
            }
            left = u;
        }
        step += 1;
    }
}

/// Grows the per-column band and buffer from a reprojected plane region and
/// removes the ego region.
pub fn build_band(plane_region: &Bitmap, ego: &Bitmap, params: &MaskParams) -> ProcessingMask {
    let (width, height) = (plane_region.width(), plane_region.height());
    assert_eq!((ego.width(), ego.height()), (width, height), "ego mask dimensions");
    let mut extents = column_extents(plane_region);
    bridge_gaps(&mut extents, params.max_gap_columns);

    let buffer = params.buffer_rows(height);
    let cap = params.band_cap_rows(height);
    let mut band = Bitmap::new(width, height);
    let mut buffer_region = Bitmap::new(width, height);
    for (u, ext) in extents.iter().enumerate() {
        let Some((top, bottom)) = *ext else {
            continue;
        };
        band.fill_column(u, top..(bottom + 1).min(top + cap), true);
        buffer_region.fill_column(u, top.saturating_sub(buffer)..top, true);
    }

    let bits = band
        .bits()
        .iter()
        .zip(buffer_region.bits())
        .zip(ego.bits())
        .map(|((&p, &b), &e)| (p || b) && !e)
        .collect();
    let bitmap = Bitmap::from_bits(width, height, bits).expect("same dimensions");
    let coverage = coverage_fraction(&bitmap);
    ProcessingMask {
        bitmap,
        plane_region: band,
        buffer_region,
        ego_region: ego.clone(),
        coverage,
    }
}

pub fn coverage_fraction(mask: &Bitmap) -> f64 {
    let total = mask.width() * mask.height();
    if total == 0 {
        return 0.0;
    }
    mask.count_ones() as f64 / total as f64
}

/// Visualization: ego red, plane band yellow, buffer green, everything else
/// that is not processed darkened.
pub fn overlay(rgb: &RgbImage, mask: &ProcessingMask) -> RgbImage {
    let mut out = rgb.clone();
    let blend = |px: [u8; 3], tint: [u8; 3]| [0, 1, 2].map(|c| ((px[c] as u16 + tint[c] as u16) / 2) as u8);
    for v in 0..rgb.height() {
        for u in 0..rgb.width() {
            let px = rgb.get(u, v);
            let shaded = if mask.ego_region.get(u, v) {
                blend(px, [255, 0, 0])
            } else if mask.bitmap.get(u, v) && mask.plane_region.get(u, v) {
                blend(px, [255, 255, 0])
            } else if mask.bitmap.get(u, v) {
                blend(px, [0, 255, 0])
            } else {
                px.map(|c| c / 3)
            };
            out.set(u, v, shaded);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelIndex;
    use crate::plane::Orientation;
    use nalgebra::Vector3;

    fn no_ego(w: usize, h: usize) -> Bitmap {
        Bitmap::new(w, h)
    }

    fn fixed_buffer(buffer_px: usize) -> MaskParams {
        MaskParams {
            buffer_px,
            auto_scale_buffer: false,
            ..Default::default()
        }
    }

    #[test]
    fn single_inlier_paints_its_block() {
        let mut cloud = PointCloud::new();
        cloud.push(Vector3::zeros(), PixelIndex { u: 100, v: 2000 });
        let plane = Plane {
            normal: Vector3::z(),
            offset: 0.0,
            inliers: vec![0],
            orientation: Orientation::Horizontal,
        };
        let region = reproject_planes(&[plane], &cloud, 10, 4096, 2048);
        assert_eq!(region.count_ones(), 100);
        assert!(region.get(100, 2000) && region.get(109, 2009));
        assert!(!region.get(110, 2000) && !region.get(100, 2010));
    }

    #[test]
    fn blocks_clip_at_the_border() {
        let mut cloud = PointCloud::new();
        cloud.push(Vector3::zeros(), PixelIndex { u: 4090, v: 2040 });
        let plane = Plane {
            normal: Vector3::z(),
            offset: 0.0,
            inliers: vec![0],
            orientation: Orientation::Horizontal,
        };
        assert_eq!(reproject_planes(&[plane], &cloud, 10, 4096, 2048).count_ones(), 48);
    }

    #[test]
    fn no_planes_gives_empty_mask() {
        let region = reproject_planes(&[], &PointCloud::new(), 10, 64, 32);
        let mask = build_band(&region, &no_ego(64, 32), &MaskParams::default());
        assert!(mask.bitmap.is_empty());
        assert_eq!(mask.coverage, 0.0);
    }

    #[test]
    fn band_column_arithmetic() {
        let (w, h) = (8, 11_180);
        let mut region = Bitmap::new(w, h);
        for u in 0..w {
            region.fill_column(u, 1300..2001, true);
        }
        let mask = build_band(&region, &no_ego(w, h), &fixed_buffer(350));
        for u in 0..w {
            for v in 0..h {
                assert_eq!(mask.bitmap.get(u, v), (950..=2000).contains(&v), "({u}, {v})");
            }
        }
        assert_eq!(mask.buffer_region.count_ones(), 350 * w);
    }

    #[test]
    fn band_is_capped() {
        let (w, h) = (4, 300);
        let mut region = Bitmap::new(w, h);
        for u in 0..w {
            region.fill_column(u, 100..300, true);
        }
        let mask = build_band(&region, &no_ego(w, h), &fixed_buffer(0));
        assert_eq!(mask.row_span(0), Some((100, 199)));
    }

    #[test]
    fn gaps_are_bridged_across_the_seam() {
        let (w, h) = (100, 50);
        let mut region = Bitmap::new(w, h);
        for u in 5..95 {
            region.fill_column(u, 20..30, true);
        }
        let params = MaskParams {
            max_gap_columns: 10,
            ..fixed_buffer(0)
        };
        let mask = build_band(&region, &no_ego(w, h), &params);
        for u in [0, 2, 97, 99] {
            assert_eq!(mask.row_span(u), Some((20, 29)), "column {u}");
        }
        let params = MaskParams {
            max_gap_columns: 9,
            ..fixed_buffer(0)
        };
        let mask = build_band(&region, &no_ego(w, h), &params);
        assert_eq!(mask.row_span(0), None);
    }

    #[test]
    fn gap_interpolates_linearly() {
        let (w, h) = (40, 100);
        let mut region = Bitmap::new(w, h);
        region.fill_column(0, 10..50, true);
        region.fill_column(4, 30..50, true);
        let params = MaskParams {
            max_gap_columns: 3,
            band_cap_frac: 1.0,
            ..fixed_buffer(0)
        };
        let mask = build_band(&region, &no_ego(w, h), &params);
        assert_eq!(mask.row_span(1), Some((15, 49)));
        assert_eq!(mask.row_span(2), Some((20, 49)));
        assert_eq!(mask.row_span(3), Some((25, 49)));
        assert_eq!(mask.row_span(20), None);
    }

    #[test]
    fn ego_cutoff_rows() {
        let mask = elevation_cutoff_mask(-62.0, 8, 2048);
        assert_eq!(mask.row_bounds(), Some((1729, 2047)));
        assert!(elevation_cutoff_mask(-90.0, 8, 2048).is_empty());
    }

    #[test]
    fn ego_is_removed_last() {
        let (w, h) = (4, 100);
        let mut region = Bitmap::new(w, h);
        for u in 0..w {
            region.fill_column(u, 40..80, true);
        }
        let ego = elevation_cutoff_mask(-36.0, w, h);
        let mask = build_band(&region, &ego, &fixed_buffer(5));
        assert!(mask.bitmap.get(0, 35) && mask.bitmap.get(0, 69));
        assert!(!mask.bitmap.get(0, 70));
        assert!(mask.plane_region.get(0, 70));
    }

    #[test]
    fn ego_file_dimension_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ego.pgm");
        let mut ego = Bitmap::new(8, 4);
        ego.set(3, 3, true);
        crate::io::write_mask(&ego, &path).unwrap();
        let params = MaskParams {
            ego: EgoSpec::File { mask_path: path },
            ..Default::default()
        };
        assert_eq!(ego_mask(&params, 8, 4).unwrap(), ego);
        assert!(matches!(
            ego_mask(&params, 16, 8),
            Err(MaskError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn buffer_scales_with_height() {
        let params = MaskParams::default();
        assert_eq!(params.buffer_rows(2048), 64);
        assert_eq!(params.buffer_rows(REFERENCE_HEIGHT), 350);
    }

    #[test]
    fn coverage_examples() {
        let full = Bitmap::from_bits(4, 2, vec![true; 8]).unwrap();
        assert_eq!(coverage_fraction(&full), 1.0);
        let mut half = Bitmap::new(4, 2);
        for u in 0..4 {
            half.set(u, 1, true);
        }
        assert_eq!(coverage_fraction(&half), 0.5);
    }

    impl ProcessingMask {
        fn row_span(&self, u: usize) -> Option<(usize, usize)> {
            let rows: Vec<usize> = (0..self.height()).filter(|&v| self.bitmap.get(u, v)).collect();
            Some((*rows.first()?, *rows.last()?))
        }
    }
}
