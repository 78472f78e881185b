use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, DetectionRecord, Detector, DetectorError, ObjectClass};
use crate::tiler::Patch;

/// Minimum fraction of a ground-truth box that must fall inside a patch for
/// the oracle to report it.
pub const ORACLE_MIN_VISIBLE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// Reports ground-truth boxes, clipped to the patch, with score 1.0.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    objects: Vec<GroundTruthBox>,
    pano_width: usize,
}

impl OracleDetector {
    pub fn new(objects: Vec<GroundTruthBox>, pano_width: usize) -> Self {
        Self { objects, pano_width }
    }

    pub fn detect_boxes(&self, patch: &Patch) -> Vec<DetectionRecord> {
        let w = self.pano_width as f64;
        let (u0, v0) = (patch.origin_u as f64, patch.origin_v as f64);
        let frame = BoundingBox::new(u0, v0, u0 + patch.width as f64, v0 + patch.height as f64);
        let mut out = Vec::new();
        for gt in &self.objects {
            let area = gt.bbox.area();
            if area <= 0.0 {
                continue;
            }
            let best = [-w, 0.0, w]
                .iter()
                .filter_map(|&s| gt.bbox.translate(s, 0.0).intersection(&frame))
                .max_by(|a, b| a.area().total_cmp(&b.area()));
            if let Some(clipped) = best {
                if clipped.area() >= ORACLE_MIN_VISIBLE * area {
                    out.push(DetectionRecord {
                        class: gt.class,
                        bbox: clipped.translate(-u0, -v0),
                        score: 1.0,
                    });
                }
            }
        }
        out
    }
}

impl Detector for OracleDetector {
    fn detect(&self, patch: &Patch) -> Result<Vec<DetectionRecord>, DetectorError> {
        Ok(self.detect_boxes(patch))
    }
}

/// Adds a fixed per-patch delay to another detector, standing in for model
/// inference latency when exercising the parallel patch dispatch.
#[derive(Debug, Clone)]
pub struct LatencyDetector<D> {
    inner: D,
    latency: Duration,
}

impl<D> LatencyDetector<D> {
    pub fn new(inner: D, latency: Duration) -> Self {
        Self { inner, latency }
    }
}

impl<D: Detector> Detector for LatencyDetector<D> {
    fn detect(&self, patch: &Patch) -> Result<Vec<DetectionRecord>, DetectorError> {
        std::thread::sleep(self.latency);
        self.inner.detect(patch)
    }

    fn max_parallelism(&self) -> Option<usize> {
        self.inner.max_parallelism()
    }
}
