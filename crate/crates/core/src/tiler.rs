//! Fixed-size detector patches over the processing mask.
//!
//! Patch rows advance down the mask's bounding rows with a vertical stride
//! of `patch_h − overlap_px`, the last row clamped to the image. Within each
//! patch row the occupied columns are split into circular runs; a run that
//! covers the whole ring is tiled from column 0 with a stride of
//! `patch_w − overlap_px` and wraps across the seam, any other run is tiled
//! from its first column. Consecutive patches overlap by at least
//! `overlap_px`, so any box no larger than the overlap in either direction is
//! wholly inside some patch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{BoundingBox, DetectionRecord};
use crate::image::{Bitmap, RgbImage};

#[derive(Debug, Error, PartialEq)]
pub enum TileError {
    #[error("patch {patch_w}x{patch_h} does not fit a {width}x{height} panorama")]
    PatchTooLarge {
        patch_w: usize,
        patch_h: usize,
        width: usize,
        height: usize,
    },
    #[error("mask is {mask_w}x{mask_h} but panorama is {width}x{height}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid tiler parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilerParams {
    pub patch_w: usize,
    pub patch_h: usize,
    pub overlap_px: usize,
    /// IoU at or above which a lower-scored duplicate is dropped.
    pub merge_iou: f64,
}

impl Default for TilerParams {
    fn default() -> Self {
        Self {
            patch_w: 1200,
            patch_h: 600,
            overlap_px: 120,
            merge_iou: 0.5,
        }
    }
}

impl TilerParams {
    pub fn validate(&self) -> Result<(), TileError> {
        if self.patch_w == 0 || self.patch_h == 0 {
            return Err(TileError::InvalidParams("patch sides must be positive".into()));
        }
        if self.overlap_px >= self.patch_w.min(self.patch_h) {
            return Err(TileError::InvalidParams(format!(
                "overlap_px {} must be smaller than both patch sides",
                self.overlap_px
            )));
        }
        if !(self.merge_iou > 0.0 && self.merge_iou <= 1.0) {
            return Err(TileError::InvalidParams(format!(
                "merge_iou must lie in (0, 1], got {}",
                self.merge_iou
            )));
        }
        Ok(())
    }

    fn stride_u(&self) -> usize {
        self.patch_w - self.overlap_px
    }

    fn stride_v(&self) -> usize {
        self.patch_h - self.overlap_px
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Patch {
    /// Position in the tiling order.
    pub index: usize,
    pub origin_u: usize,
    pub origin_v: usize,
    pub width: usize,
    pub height: usize,
    /// Columns past `W − 1` continue from column 0.
    pub wraps_seam: bool,
    pub pixels: RgbImage,
}

impl Patch {
    pub fn file_name(&self) -> String {
        format!("patch_{}_{}_{}.ppm", self.index, self.origin_u, self.origin_v)
    }

    /// Panorama-space frame of the patch; `u_max` may exceed `W`.
    pub fn frame(&self) -> BoundingBox {
        BoundingBox::new(
            self.origin_u as f64,
            self.origin_v as f64,
            (self.origin_u + self.width) as f64,
            (self.origin_v + self.height) as f64,
        )
    }
}

impl std::fmt::Debug for Patch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Patch")
            .field("index", &self.index)
            .field("origin", &(self.origin_u, self.origin_v))
            .field("size", &(self.width, self.height))
            .field("wraps_seam", &self.wraps_seam)
            .finish()
    }
}

/// Start offsets along a run of `len` cells so that windows of `window`
/// cells advancing by `stride` cover it.
fn run_starts(len: usize, window: usize, stride: usize) -> impl Iterator<Item = usize> {
    let count = if len <= window {
        1
    } else {
        1 + (len - window).div_ceil(stride)
    };
    (0..count).map(move |k| k * stride)
}

/// Circular runs `(start, len)` of occupied columns.
fn column_runs(occupied: &[bool]) -> Vec<(usize, usize)> {
    let w = occupied.len();
    let Some(gap) = occupied.iter().position(|&o| !o) else {
        return vec![(0, w)];
    };
    let mut runs = Vec::new();
    let mut step = 1;
    while step <= w {
        let u = (gap + step) % w;
        if occupied[u] {
            let mut len = 0;
            while occupied[(u + len) % w] {
                len += 1;
            }
            runs.push((u, len));
            step += len;
        } else {
            step += 1;
        }
    }
    runs.sort_unstable();
    runs
}

fn crop(rgb: &RgbImage, u0: usize, v0: usize, w: usize, h: usize) -> RgbImage {
    let pano_w = rgb.width();
    let mut data = Vec::with_capacity(w * h * 3);
    let raw = rgb.as_raw();
    for v in v0..v0 + h {
        let row = &raw[v * pano_w * 3..(v + 1) * pano_w * 3];
        let mut u = u0;
        let mut remaining = w;
        while remaining > 0 {
            let take = remaining.min(pano_w - u);
            data.extend_from_slice(&row[u * 3..(u + take) * 3]);
            remaining -= take;
            u = 0;
        }
    }
    RgbImage::from_raw(w, h, data).expect("crop size")
}

/// Whether any bit in rows `[v0, v0+h)` and columns `[u0, u0+w)` (mod W) is set.
fn intersects(mask: &Bitmap, u0: usize, v0: usize, w: usize, h: usize) -> bool {
    let pano_w = mask.width();
    (v0..v0 + h).any(|v| {
        let row = mask.row(v);
        (u0..u0 + w).any(|u| row[u % pano_w])
    })
}

pub fn tile(mask: &Bitmap, rgb: &RgbImage, params: &TilerParams) -> Result<Vec<Patch>, TileError> {
    params.validate()?;
    let (width, height) = (rgb.width(), rgb.height());
    if mask.width() != width || mask.height() != height {
        return Err(TileError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            width,
            height,
        });
    }
    if params.patch_w > width || params.patch_h > height {
        return Err(TileError::PatchTooLarge {
            patch_w: params.patch_w,
            patch_h: params.patch_h,
            width,
            height,
        });
    }
    let Some((first_row, last_row)) = mask.row_bounds() else {
        return Ok(Vec::new());
    };

    let mut origins: Vec<(usize, usize)> = Vec::new();
    let rows = last_row - first_row + 1;
    for dv in run_starts(rows, params.patch_h, params.stride_v()) {
        let v0 = (first_row + dv).min(height - params.patch_h);
        let mut occupied = vec![false; width];
        for v in v0..v0 + params.patch_h {
            for (o, &bit) in occupied.iter_mut().zip(mask.row(v)) {
                *o |= bit;
            }
        }
        if !occupied.iter().any(|&o| o) {
            continue;
        }
        for (start, len) in column_runs(&occupied) {
            if len == width {
                let count = width.div_ceil(params.stride_u());
                origins.extend((0..count).map(|k| (v0, k * params.stride_u())));
            } else {
                origins.extend(run_starts(len, params.patch_w, params.stride_u()).map(|du| (v0, (start + du) % width)));
            }
        }
    }
    origins.sort_unstable();
    origins.dedup();

    let patches = origins
        .into_iter()
        .filter(|&(v0, u0)| intersects(mask, u0, v0, params.patch_w, params.patch_h))
        .enumerate()
        .map(|(index, (v0, u0))| Patch {
            index,
            origin_u: u0,
            origin_v: v0,
            width: params.patch_w,
            height: params.patch_h,
            wraps_seam: u0 + params.patch_w > width,
            pixels: crop(rgb, u0, v0, params.patch_w, params.patch_h),
        })
        .collect();
    Ok(patches)
}

/// Moves a patch-local box into panorama coordinates, splitting it in two
/// when it crosses the seam.
pub fn to_global(patch: &Patch, local: &BoundingBox, pano_width: usize) -> Vec<BoundingBox> {
    local
        .translate(patch.origin_u as f64, patch.origin_v as f64)
        .split_at_seam(pano_width as f64)
}

/// Greedy per-class suppression in score order (larger boxes first among
/// equal scores): a box is dropped when its wrapped IoU with an already kept
/// box of the same class reaches `merge_iou`. Output is sorted by descending
/// score, then `u_min`, then `v_min`.
pub fn merge_detections(detections: &[DetectionRecord], merge_iou: f64, pano_width: usize) -> Vec<DetectionRecord> {
    let w = pano_width as f64;
    let mut order: Vec<&DetectionRecord> = detections.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.bbox.area().total_cmp(&a.bbox.area()))
            .then(a.bbox.u_min.total_cmp(&b.bbox.u_min))
            .then(a.bbox.v_min.total_cmp(&b.bbox.v_min))
            .then(a.bbox.u_max.total_cmp(&b.bbox.u_max))
            .then(a.bbox.v_max.total_cmp(&b.bbox.v_max))
            .then(a.class.cmp(&b.class))
    });
    let mut kept: Vec<DetectionRecord> = Vec::new();
    for det in order {
        let duplicate = kept
            .iter()
            .any(|k| k.class == det.class && k.bbox.wrapped_iou(&det.bbox, w) >= merge_iou);
        if !duplicate {
            kept.push(*det);
        }
    }
    kept.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.u_min.total_cmp(&b.bbox.u_min))
            .then(a.bbox.v_min.total_cmp(&b.bbox.v_min))
            .then(a.bbox.u_max.total_cmp(&b.bbox.u_max))
            .then(a.bbox.v_max.total_cmp(&b.bbox.v_max))
            .then(a.class.cmp(&b.class))
    });
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::ObjectClass;

    fn block_mask(w: usize, h: usize, us: std::ops::Range<usize>, vs: std::ops::Range<usize>) -> Bitmap {
        let mut m = Bitmap::new(w, h);
        for u in us {
            m.fill_column(u % w, vs.clone(), true);
        }
        m
    }

    fn det(b: [f64; 4], score: f64) -> DetectionRecord {
        DetectionRecord {
            class: ObjectClass::Face,
            bbox: b.into(),
            score,
        }
    }

    #[test]
    fn aligned_block_needs_one_patch() {
        let mask = block_mask(4096, 2048, 0..1200, 900..1500);
        let patches = tile(&mask, &RgbImage::new(4096, 2048), &TilerParams::default()).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!((patches[0].origin_u, patches[0].origin_v), (0, 900));
    }

    #[test]
    fn empty_mask_needs_no_patches() {
        let mask = Bitmap::new(4096, 2048);
        assert!(tile(&mask, &RgbImage::new(4096, 2048), &TilerParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn full_ring_band_wraps_the_seam() {
        let mask = block_mask(4096, 2048, 0..4096, 1000..1600);
        let patches = tile(&mask, &RgbImage::new(4096, 2048), &TilerParams::default()).unwrap();
        let origins: Vec<usize> = patches.iter().map(|p| p.origin_u).collect();
        assert_eq!(origins, vec![0, 1080, 2160, 3240]);
        assert!(patches[3].wraps_seam && !patches[2].wraps_seam);
    }

    #[test]
    fn run_across_the_seam_starts_at_its_first_column() {
        let mask = block_mask(4096, 2048, 4000..4200, 1000..1100);
        let patches = tile(&mask, &RgbImage::new(4096, 2048), &TilerParams::default()).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].origin_u, 4000);
        assert!(patches[0].wraps_seam);
    }

    #[test]
    fn wrapped_crop_copies_from_column_zero() {
        let mut rgb = RgbImage::new(8, 4);
        rgb.set(0, 1, [9, 9, 9]);
        let p = crop(&rgb, 6, 0, 4, 2);
        assert_eq!(p.get(2, 1), [9, 9, 9]);
    }

    #[test]
    fn bottom_row_is_clamped() {
        let mask = block_mask(4096, 2048, 0..100, 1500..2048);
        let patches = tile(&mask, &RgbImage::new(4096, 2048), &TilerParams::default()).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].origin_v, 2048 - 600);
    }

    #[test]
    fn oversized_patch_is_rejected() {
        let mask = Bitmap::new(1024, 512);
        let err = tile(&mask, &RgbImage::new(1024, 512), &TilerParams::default()).unwrap_err();
        assert!(matches!(err, TileError::PatchTooLarge { .. }));
    }

    fn patch_at(u0: usize, v0: usize) -> Patch {
        Patch {
            index: 0,
            origin_u: u0,
            origin_v: v0,
            width: 1200,
            height: 600,
            wraps_seam: false,
            pixels: RgbImage::new(1, 1),
        }
    }

    #[test]
    fn to_global_translates_and_splits() {
        let local = BoundingBox::new(10.0, 20.0, 110.0, 70.0);
        assert_eq!(
            to_global(&patch_at(1000, 400), &local, 4096),
            vec![BoundingBox::new(1010.0, 420.0, 1110.0, 470.0)]
        );
        let local = BoundingBox::new(50.0, 0.0, 150.0, 40.0);
        assert_eq!(
            to_global(&patch_at(3996, 0), &local, 4096),
            vec![
                BoundingBox::new(4046.0, 0.0, 4096.0, 40.0),
                BoundingBox::new(0.0, 0.0, 50.0, 40.0)
            ]
        );
        let edge = BoundingBox::new(1100.0, 500.0, 1200.0, 600.0);
        assert_eq!(to_global(&patch_at(0, 0), &edge, 4096), vec![edge]);
    }

    #[test]
    fn merge_examples() {
        let same = merge_detections(&[det([0., 0., 10., 10.], 0.8), det([0., 0., 10., 10.], 0.9)], 0.5, 4096);
        assert_eq!(same, vec![det([0., 0., 10., 10.], 0.9)]);
        let disjoint = merge_detections(
            &[det([0., 0., 10., 10.], 0.8), det([20., 0., 30., 10.], 0.9)],
            0.5,
            4096,
        );
        assert_eq!(disjoint.len(), 2);
        let third = merge_detections(
            &[det([0., 0., 100., 100.], 0.9), det([50., 0., 150., 100.], 0.8)],
            0.5,
            4096,
        );
        assert_eq!(third.len(), 2);
    }

    #[test]
    fn merge_keeps_classes_apart_and_sees_the_seam() {
        let mut plate = det([0., 0., 10., 10.], 0.7);
        plate.class = ObjectClass::Plate;
        let out = merge_detections(&[det([0., 0., 10., 10.], 0.9), plate], 0.5, 100);
        assert_eq!(out.len(), 2);
        let out = merge_detections(
            &[det([95., 0., 105., 10.], 0.9), det([96., 0., 104., 10.], 0.5)],
            0.5,
            100,
        );
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn larger_box_wins_a_score_tie() {
        let out = merge_detections(&[det([0., 0., 12., 20.], 1.0), det([0., 0., 20., 20.], 1.0)], 0.5, 4096);
        assert_eq!(out, vec![det([0., 0., 20., 20.], 1.0)]);
    }
}
