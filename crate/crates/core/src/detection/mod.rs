//! Detector contract, test doubles, the external-process adapter and blur.
//!
//! Boxes are in pixel units with exclusive maxima. Panorama boxes keep
//! `u_min` in `[0, W)` and may extend past `u = W`, meaning they wrap across
//! the seam; [`BoundingBox::split_at_seam`] turns such a box into the two
//! on-image fragments.

mod blur;
mod external;
mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tiler::Patch;

pub use blur::{blur_regions, gaussian_kernel, BlurParams};
pub use external::{ExternalDetector, ExternalDetectorConfig, PatchRequest, PatchResponse};
pub use oracle::{GroundTruthBox, LatencyDetector, OracleDetector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Face,
    Plate,
}

/// Axis-aligned box `[u_min, v_min, u_max, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from([u_min, v_min, u_max, v_max]: [f64; 4]) -> Self {
        Self {
            u_min,
            v_min,
            u_max,
            v_max,
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.u_min, b.v_min, b.u_max, b.v_max]
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

impl BoundingBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Self {
        Self {
            u_min,
            v_min,
            u_max,
            v_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        [self.u_min, self.v_min, self.u_max, self.v_max]
            .iter()
            .all(|c| c.is_finite())
    }

    pub fn translate(&self, du: f64, dv: f64) -> Self {
        Self::new(self.u_min + du, self.v_min + dv, self.u_max + du, self.v_max + dv)
    }

    /// Planar intersection, `None` when the overlap has zero area.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let b = Self::new(
            self.u_min.max(other.u_min),
            self.v_min.max(other.v_min),
            self.u_max.min(other.u_max),
            self.v_max.min(other.v_max),
        );
        (b.u_min < b.u_max && b.v_min < b.v_max).then_some(b)
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.u_min <= other.u_min && self.v_min <= other.v_min && self.u_max >= other.u_max && self.v_max >= other.v_max
    }

    /// Intersection area on a horizontally periodic image of width
    /// `pano_width`, counting overlap through the seam.
    pub fn wrapped_intersection_area(&self, other: &Self, pano_width: f64) -> f64 {
        let dv = overlap(self.v_min, self.v_max, other.v_min, other.v_max);
        if dv == 0.0 {
            return 0.0;
        }
        let du: f64 = [-pano_width, 0.0, pano_width]
            .iter()
            .map(|s| overlap(self.u_min, self.u_max, other.u_min + s, other.u_max + s))
            .sum();
        du.min(self.width()).min(other.width()) * dv
    }

    pub fn wrapped_iou(&self, other: &Self, pano_width: f64) -> f64 {
        let inter = self.wrapped_intersection_area(other, pano_width);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Shifts by whole turns so that `u_min` lies in `[0, W)`.
    pub fn normalized(&self, pano_width: f64) -> Self {
        let shift = self.u_min.rem_euclid(pano_width) - self.u_min;
        self.translate(shift, 0.0)
    }

    /// On-image fragments of a (normalized) box that may cross `u = W`.
    pub fn split_at_seam(&self, pano_width: f64) -> Vec<Self> {
        let b = self.normalized(pano_width);
        if b.u_max <= pano_width {
            vec![b]
        } else {
            vec![
                Self::new(b.u_min, b.v_min, pano_width, b.v_max),
                Self::new(0.0, b.v_min, b.u_max - pano_width, b.v_max),
            ]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

impl DetectionRecord {
    /// Checks the detector contract for a box local to a `width × height`
    /// patch: finite, non-empty, inside the bounds, score in `[0, 1]`.
    pub fn check_local(&self, width: f64, height: f64) -> Result<(), String> {
        let b = &self.bbox;
        if !b.is_finite() {
            return Err("box has a non-finite coordinate".into());
        }
        if !(b.u_min < b.u_max && b.v_min < b.v_max) {
            return Err(format!("box {:?} is empty or inverted", <[f64; 4]>::from(*b)));
        }
        if b.u_min < 0.0 || b.v_min < 0.0 || b.u_max > width || b.v_max > height {
            return Err(format!(
                "box {:?} exceeds {width}x{height} bounds",
                <[f64; 4]>::from(*b)
            ));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("failed to run detector process: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("detector I/O failed: {0}")]
    Io(#[source] std::io::Error),
    #[error("detector process exited ({status})")]
    Exited { status: String },
    #[error("detector did not answer within {seconds} s")]
    Timeout { seconds: f64 },
    #[error("protocol violation: {reason}; line: {line:?}")]
    Protocol { line: String, reason: String },
}

/// A patch-level object detector.
///
/// Implementations return boxes local to the patch and must be stateless
/// across calls: the same patch always yields the same detections.
pub trait Detector: Send + Sync {
    fn detect(&self, patch: &Patch) -> Result<Vec<DetectionRecord>, DetectorError>;

    /// Upper bound on concurrent `detect` calls; `None` means unbounded.
    fn max_parallelism(&self) -> Option<usize> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapped_iou_sees_through_the_seam() {
        let w = 100.0;
        let a = BoundingBox::new(95.0, 0.0, 105.0, 10.0);
        let b = BoundingBox::new(0.0, 0.0, 5.0, 10.0);
        assert!((a.wrapped_intersection_area(&b, w) - 50.0).abs() < 1e-12);
        assert!((a.wrapped_iou(&b, w) - 0.5).abs() < 1e-12);
        assert_eq!(a.intersection(&b), None);
    }

    #[test]
    fn iou_of_half_shifted_squares() {
        let a = BoundingBox::new(0.0, 0.0, 100.0, 100.0);
        let b = BoundingBox::new(50.0, 0.0, 150.0, 100.0);
        assert!((a.wrapped_iou(&b, 4096.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn split_at_seam_fragments() {
        let parts = BoundingBox::new(4046.0, 0.0, 4146.0, 40.0).split_at_seam(4096.0);
        assert_eq!(
            parts,
            vec![
                BoundingBox::new(4046.0, 0.0, 4096.0, 40.0),
                BoundingBox::new(0.0, 0.0, 50.0, 40.0)
            ]
        );
        let whole = BoundingBox::new(4100.0, 0.0, 4150.0, 40.0).split_at_seam(4096.0);
        assert_eq!(whole, vec![BoundingBox::new(4.0, 0.0, 54.0, 40.0)]);
    }

    #[test]
    fn contract_check_rejects_bad_boxes() {
        let ok = DetectionRecord {
            class: ObjectClass::Face,
            bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0),
            score: 0.5,
        };
        assert!(ok.check_local(10.0, 10.0).is_ok());
        let mut bad = ok;
        bad.score = f64::NAN;
        assert!(bad.check_local(10.0, 10.0).is_err());
        bad = ok;
        bad.bbox.u_max = 11.0;
        assert!(bad.check_local(10.0, 10.0).is_err());
        bad = ok;
        bad.bbox.v_min = 10.0;
        assert!(bad.check_local(10.0, 10.0).is_err());
    }

    #[test]
    fn detection_json_shape() {
        let d = DetectionRecord {
            class: ObjectClass::Plate,
            bbox: BoundingBox::new(1.0, 2.0, 3.5, 4.0),
            score: 0.97,
        };
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(text, r#"{"class":"plate","box":[1.0,2.0,3.5,4.0],"score":0.97}"#);
    }
}
