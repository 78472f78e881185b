//! Search-space reduction for privacy blurring in 360° street-view panoramas.
//!
//! A per-pixel LiDAR depth map is unprojected into a point cloud, the dominant
//! planes are extracted with RANSAC, and the horizontal ones are reprojected
//! into the panorama to build a processing mask. Only the masked band is tiled
//! into fixed-size patches and handed to a detector; merged detections are
//! then blurred in the full-resolution panorama.
//!
//! The stages map onto modules:
//!
//! * [`io`]: PPM/PGM/PFM codecs and JSON documents.
//! * [`geometry`]: equirectangular pixel/ray conversion and unprojection.
//! * [`plane`]: seeded RANSAC plane fitting and sequential extraction.
//! * [`mask`]: plane reprojection, per-column bands, ego exclusion.
//! * [`tiler`]: patch tiling with seam wrap and detection merging.
//! * [`detection`]: detector contract, oracle, external adapter and blur.
//! * [`scene`]: analytic RGB-D renderer and fixture catalog.
//! * [`pipeline`]: end-to-end orchestration and run metrics.

pub mod detection;
pub mod geometry;
pub mod image;
pub mod io;
pub mod mask;
pub mod pipeline;
pub mod plane;
pub mod scene;
pub mod tiler;

pub use detection::{BoundingBox, DetectionRecord, ObjectClass};
pub use geometry::PointCloud;
pub use image::{Bitmap, DepthPanorama, RgbImage};
pub use mask::ProcessingMask;
pub use plane::{Orientation, Plane, RansacParams};
