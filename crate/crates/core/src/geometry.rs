//! Equirectangular projection and depth unprojection.
//!
//! Camera frame: origin at the camera, +x forward, +y left, +z up. Azimuth θ
//! runs over [−π, π) from +x toward +y and elevation φ over [−π/2, π/2] from
//! the horizon toward +z. A pixel `(u, v)` of a `W×H` panorama is sampled at
//! its center:
//!
//! ```text
//! θ = 2π(u + 0.5)/W − π        φ = π/2 − π(v + 0.5)/H
//! d = (cos φ cos θ, cos φ sin θ, sin φ)
//! ```

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;

use crate::image::{DepthPanorama, RgbImage};

pub type Point3 = Vector3<f64>;

/// Azimuth of the center of (continuous) column `u`.
#[inline]
pub fn column_azimuth(u: f64, width: usize) -> f64 {
    TAU * (u + 0.5) / width as f64 - PI
}

/// Elevation of the center of (continuous) row `v`.
#[inline]
pub fn row_elevation(v: f64, height: usize) -> f64 {
    FRAC_PI_2 - PI * (v + 0.5) / height as f64
}

#[inline]
fn direction(theta: f64, phi: f64) -> Point3 {
    let (sin_t, cos_t) = theta.sin_cos();
    let (sin_p, cos_p) = phi.sin_cos();
    Vector3::new(cos_p * cos_t, cos_p * sin_t, sin_p)
}

/// Unit viewing ray through pixel `(u, v)`.
///
/// # Panics
///
/// If `(u, v)` lies outside `[0, W) × [0, H)`.
pub fn pixel_to_ray(u: f64, v: f64, width: usize, height: usize) -> Point3 {
    assert!(
        (0.0..width as f64).contains(&u) && (0.0..height as f64).contains(&v),
        "pixel ({u}, {v}) outside {width}x{height}"
    );
    direction(column_azimuth(u, width), row_elevation(v, height))
}

/// Continuous pixel coordinates hit by `direction`. `u` is wrapped into
/// `[0, W)`; `v` is clamped to `[0, H − 1]`, and the azimuth of an exact pole
/// is taken as 0.
///
/// # Panics
///
/// If `direction` is the zero vector or not finite.
pub fn ray_to_pixel(direction: &Point3, width: usize, height: usize) -> (f64, f64) {
    let norm = direction.norm();
    assert!(norm > 0.0 && norm.is_finite(), "degenerate direction {direction:?}");
    let horizontal = direction.x.hypot(direction.y);
    let theta = if horizontal == 0.0 {
        0.0
    } else {
        direction.y.atan2(direction.x)
    };
    let phi = direction.z.atan2(horizontal);
    let w = width as f64;
    let u = ((theta + PI) * w / TAU - 0.5).rem_euclid(w);
    // rem_euclid can round up to exactly w for tiny negative inputs.
    let u = if u >= w { 0.0 } else { u };
    let v = ((FRAC_PI_2 - phi) * height as f64 / PI - 0.5).clamp(0.0, (height - 1) as f64);
    (u, v)
}

/// Full-resolution pixel a point was unprojected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelIndex {
    pub u: u32,
    pub v: u32,
}

/// Camera-frame points tagged with their source pixel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    positions: Vec<Point3>,
    sources: Vec<PixelIndex>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, position: Point3, source: PixelIndex) {
        self.positions.push(position);
        self.sources.push(source);
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn sources(&self) -> &[PixelIndex] {
        &self.sources
    }
}

/// Projects every `stride`-th pixel (in both directions, starting at 0) with
/// finite depth into the camera frame. Output is row-major.
///
/// # Panics
///
/// If `stride` is zero.
pub fn unproject(pano: &DepthPanorama, stride: usize) -> PointCloud {
    assert!(stride >= 1, "stride must be at least 1");
    let (width, height) = (pano.width(), pano.height());
    let columns: Vec<(usize, f64, f64)> = (0..width)
        .step_by(stride)
        .map(|u| {
            let (s, c) = column_azimuth(u as f64, width).sin_cos();
            (u, s, c)
        })
        .collect();
    let mut cloud = PointCloud::new();
    for v in (0..height).step_by(stride) {
        let (sin_p, cos_p) = row_elevation(v as f64, height).sin_cos();
        for &(u, sin_t, cos_t) in &columns {
            let depth = pano.depth_at(u, v);
            if !depth.is_finite() {
                continue;
            }
            let ray = Vector3::new(cos_p * cos_t, cos_p * sin_t, sin_p);
            cloud.push(
                ray * depth as f64,
                PixelIndex {
                    u: u as u32,
                    v: v as u32,
                },
            );
        }
    }
    cloud
}

/// Sides of a panorama downsampled by `factor`.
pub fn downsampled_dims(width: usize, height: usize, factor: usize) -> (usize, usize) {
    assert!(factor >= 1, "downsample factor must be at least 1");
    (width.div_ceil(factor), height.div_ceil(factor))
}

/// Point-samples every `factor`-th pixel: output pixel `(k, l)` is input pixel
/// `(k·factor, l·factor)`. Output sides are `ceil(side / factor)`, so the
/// result can be one column off 2:1 when `factor` does not divide the height.
///
/// # Panics
///
/// If `factor` is zero.
pub fn downsample(pano: &DepthPanorama, factor: usize) -> DepthPanorama {
    assert!(factor >= 1, "downsample factor must be at least 1");
    if factor == 1 {
        return pano.clone();
    }
    let (out_w, out_h) = downsampled_dims(pano.width(), pano.height(), factor);
    let mut rgb = RgbImage::new(out_w, out_h);
    let mut depth = Vec::with_capacity(out_w * out_h);
    for l in 0..out_h {
        for k in 0..out_w {
            let (u, v) = (k * factor, l * factor);
            rgb.set(k, l, pano.rgb().get(u, v));
            depth.push(pano.depth_at(u, v));
        }
    }
    DepthPanorama::with_any_aspect(rgb, depth).expect("sampled from a valid panorama")
}
