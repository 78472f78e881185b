//! Synthetic street scenes rendered analytically into equirectangular RGB-D
//! panoramas with exact ground truth.
//!
//! Scenes are described in a world frame with the ground through the origin
//! (`z = 0` at `x = y = 0`) and the camera at `(0, 0, camera_height)`. The
//! ground may be tilted by `ground_slope_deg`, rising toward
//! `ground_slope_azimuth_deg`. Walls are vertical rectangles on a coordinate
//! plane (`axis: "y"` with `position: 8` is the plane `y = 8`, spanning `x` in
//! `[from, to]`) that run from below the ground up to `height`. Objects are
//! camera-facing billboards. Rendered depths and planes are in the camera
//! frame, whose origin is the camera.

mod catalog;
mod render;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{BoundingBox, GroundTruthBox, ObjectClass};
use crate::geometry::Point3;
use crate::image::DepthPanorama;
use crate::io::{write_depth, write_json, write_rgb, DepthMap, IoError};

pub use catalog::{catalog, fixture, FIXTURE_NAMES};
pub use render::render;

/// Tallest object top, in meters above the ground below it, that the
/// processing mask is designed to capture.
pub const MAX_OBJECT_HEIGHT_M: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct SceneError {
    pub field: String,
    pub message: String,
}

impl SceneError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    /// Coordinate held fixed on the wall plane.
    pub axis: Axis,
    pub position: f64,
    /// Extent along the other horizontal coordinate.
    pub from: f64,
    pub to: f64,
    /// World `z` of the top edge.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub class: ObjectClass,
    /// World-frame center of the billboard.
    pub center: [f64; 3],
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub violates_height_assumption: bool,
}

fn default_render_width() -> usize {
    1024
}

fn default_render_height() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSettings {
    #[serde(default = "default_render_width")]
    pub width: usize,
    #[serde(default = "default_render_height")]
    pub height: usize,
    /// Standard deviation of additive Gaussian depth noise, meters.
    #[serde(default)]
    pub depth_noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            width: default_render_width(),
            height: default_render_height(),
            depth_noise_sigma: 0.0,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub camera_height: f64,
    #[serde(default)]
    pub ground_z: f64,
    #[serde(default)]
    pub ground_slope_deg: f64,
    #[serde(default)]
    pub ground_slope_azimuth_deg: f64,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub render: RenderSettings,
}

impl SceneSpec {
    /// World `z` of the ground at `(x, y)`.
    pub fn ground_height(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.ground_slope_azimuth_deg.to_radians().sin_cos();
        self.ground_z + self.ground_slope_deg.to_radians().tan() * (x * c + y * s)
    }

    /// Upward unit normal of the ground.
    pub fn ground_normal(&self) -> Point3 {
        let (s, c) = self.ground_slope_azimuth_deg.to_radians().sin_cos();
        let t = self.ground_slope_deg.to_radians().tan();
        Point3::new(-t * c, -t * s, 1.0).normalize()
    }

    /// Height of an object's top edge above the ground below its center.
    pub fn object_top_above_ground(&self, object: &SceneObject) -> f64 {
        let [x, y, z] = object.center;
        z + object.height / 2.0 - self.ground_height(x, y)
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.render.width = width;
        self.render.height = height;
        self
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.render.depth_noise_sigma = sigma;
        self.render.noise_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.camera_height) {
            return Err(SceneError::new(
                "camera_height",
                format!("must be positive, got {}", self.camera_height),
            ));
        }
        if self.ground_z != 0.0 {
            return Err(SceneError::new(
                "ground_z",
                format!("ground is fixed at z = 0, got {}", self.ground_z),
            ));
        }
        if !(self.ground_slope_deg.abs() < 45.0) {
            return Err(SceneError::new(
                "ground_slope_deg",
                format!("must lie in (-45, 45), got {}", self.ground_slope_deg),
            ));
        }
        if !self.ground_slope_azimuth_deg.is_finite() {
            return Err(SceneError::new("ground_slope_azimuth_deg", "must be finite"));
        }
        let r = &self.render;
        if r.height == 0 || r.width != 2 * r.height {
            return Err(SceneError::new(
                "render",
                format!("size {}x{} is not a non-empty 2:1 panorama", r.width, r.height),
            ));
        }
        if !(r.depth_noise_sigma >= 0.0 && r.depth_noise_sigma.is_finite()) {
            return Err(SceneError::new("render.depth_noise_sigma", "must be non-negative"));
        }
        for (i, w) in self.walls.iter().enumerate() {
            let finite = [w.position, w.from, w.to, w.height].iter().all(|v| v.is_finite());
            if !finite || w.from >= w.to {
                return Err(SceneError::new(
                    format!("walls[{i}]"),
                    "needs finite values and from < to",
                ));
            }
        }
        if self.walls.len() > u16::MAX as usize || self.objects.len() > u16::MAX as usize {
            return Err(SceneError::new(".", "too many walls or objects"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let field = format!("objects[{i}]");
            if !(positive(o.width) && positive(o.height) && o.center.iter().all(|c| c.is_finite())) {
                return Err(SceneError::new(field, "needs a finite center and positive size"));
            }
            if o.center[0].hypot(o.center[1]) < 1e-6 {
                return Err(SceneError::new(field, "center lies on the camera's vertical axis"));
            }
            let top = self.object_top_above_ground(o);
            if top > MAX_OBJECT_HEIGHT_M && !o.violates_height_assumption {
                return Err(SceneError::new(
                    field,
                    format!(
                        "top edge is {top:.3} m above ground, over {MAX_OBJECT_HEIGHT_M} m; \
                         set violates_height_assumption to allow it"
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Plane `{p : normal·p + offset = 0}` in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPlane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl GroundTruthPlane {
    pub fn normal_vector(&self) -> Point3 {
        Point3::from(self.normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthObject {
    /// Position in the scene's object list.
    pub index: usize,
    pub class: ObjectClass,
    /// Pixel bounding box of the rendered footprint; may extend past `W`
    /// when the object straddles the seam.
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// World-frame center.
    pub center: [f64; 3],
    pub violates_height_assumption: bool,
}

impl GroundTruthObject {
    pub fn as_box(&self) -> GroundTruthBox {
        GroundTruthBox {
            class: self.class,
            bbox: self.bbox,
        }
    }
}

/// What a rendered pixel shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Surface {
    Sky,
    Ground,
    Wall(u16),
    Object(u16),
}

/// On-disk ground truth written next to a rendered fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTruth {
    pub width: usize,
    pub height: usize,
    pub camera_height: f64,
    pub planes: Vec<GroundTruthPlane>,
    pub objects: Vec<GroundTruthObject>,
}

impl SceneTruth {
    pub fn oracle_boxes(&self) -> Vec<GroundTruthBox> {
        self.objects.iter().map(GroundTruthObject::as_box).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub panorama: DepthPanorama,
    /// Ground first, then one plane per wall.
    pub gt_planes: Vec<GroundTruthPlane>,
    /// Objects with at least one rendered pixel.
    pub gt_objects: Vec<GroundTruthObject>,
    /// Row-major surface label per pixel.
    pub labels: Vec<Surface>,
}

impl RenderedScene {
    pub fn truth(&self, camera_height: f64) -> SceneTruth {
        SceneTruth {
            width: self.panorama.width(),
            height: self.panorama.height(),
            camera_height,
            planes: self.gt_planes.clone(),
            objects: self.gt_objects.clone(),
        }
    }

    pub fn label_at(&self, u: usize, v: usize) -> Surface {
        self.labels[v * self.panorama.width() + u]
    }

    /// Writes `rgb.ppm`, `depth.pfm` and `truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path, camera_height: f64) -> Result<(), IoError> {
        std::fs::create_dir_all(dir).map_err(|e| IoError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        write_rgb(self.panorama.rgb(), dir.join("rgb.ppm"))?;
        let depth = DepthMap {
            width: self.panorama.width(),
            height: self.panorama.height(),
            values: self.panorama.depth().to_vec(),
        };
        write_depth(&depth, dir.join("depth.pfm"))?;
        write_json(&self.truth(camera_height), dir.join("truth.json"))
    }
}
