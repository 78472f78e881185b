use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256StarStar;

use super::{Axis, GroundTruthObject, GroundTruthPlane, RenderedScene, SceneError, SceneSpec, Surface};
use crate::detection::{BoundingBox, ObjectClass};
use crate::geometry::{pixel_to_ray, Point3};
use crate::image::{DepthPanorama, RgbImage};

const SKY: [u8; 3] = [135, 190, 235];
const GROUND_DARK: [u8; 3] = [92, 92, 96];
const GROUND_LIGHT: [u8; 3] = [142, 142, 138];
const BRICK: [u8; 3] = [158, 78, 52];
const MORTAR: [u8; 3] = [205, 200, 188];

fn object_color(class: ObjectClass) -> [u8; 3] {
    match class {
        ObjectClass::Face => [224, 172, 105],
        ObjectClass::Plate => [245, 210, 40],
    }
}

struct Billboard {
    center: Point3,
    /// Horizontal unit normal pointing at the camera.
    normal: Point3,
    lateral: Point3,
    half_w: f64,
    half_h: f64,
}

impl Billboard {
    fn hit(&self, d: &Point3) -> Option<f64> {
        let denom = self.normal.dot(d);
        if denom >= 0.0 {
            return None;
        }
        let t = self.normal.dot(&self.center) / denom;
        let rel = d * t - self.center;
        (t > 0.0 && rel.dot(&self.lateral).abs() <= self.half_w && rel.z.abs() <= self.half_h).then_some(t)
    }
}

struct Geometry<'a> {
    spec: &'a SceneSpec,
    ground_normal: Point3,
    ground_offset: f64,
    billboards: Vec<Billboard>,
}

impl<'a> Geometry<'a> {
    fn new(spec: &'a SceneSpec) -> Self {
        let h = spec.camera_height;
        let ground_normal = spec.ground_normal();
        let billboards = spec
            .objects
            .iter()
            .map(|o| {
                let center = Point3::new(o.center[0], o.center[1], o.center[2] - h);
                let normal = -Point3::new(center.x, center.y, 0.0).normalize();
                Billboard {
                    center,
                    normal,
                    lateral: Point3::new(-normal.y, normal.x, 0.0),
                    half_w: o.width / 2.0,
                    half_h: o.height / 2.0,
                }
            })
            .collect();
        Self {
            spec,
            ground_normal,
            ground_offset: ground_normal.z * (h - spec.ground_z),
            billboards,
        }
    }

    fn wall_hit(&self, i: usize, d: &Point3) -> Option<f64> {
        let wall = &self.spec.walls[i];
        let (across, along) = match wall.axis {
            Axis::X => (d.x, d.y),
            Axis::Y => (d.y, d.x),
        };
        if across == 0.0 {
            return None;
        }
        let t = wall.position / across;
        let a = t * along;
        let z = t * d.z + self.spec.camera_height;
        (t > 0.0 && a >= wall.from && a <= wall.to && z <= wall.height).then_some(t)
    }

    /// Nearest surface along unit ray `d`.
    fn trace(&self, d: &Point3) -> (Surface, f64) {
        let mut best = (Surface::Sky, f64::INFINITY);
        let denom = self.ground_normal.dot(d);
        if denom < 0.0 {
            best = (Surface::Ground, -self.ground_offset / denom);
        }
        for i in 0..self.spec.walls.len() {
            if let Some(t) = self.wall_hit(i, d) {
                if t < best.1 {
                    best = (Surface::Wall(i as u16), t);
                }
            }
        }
        for (i, b) in self.billboards.iter().enumerate() {
            if let Some(t) = b.hit(d) {
                if t < best.1 {
                    best = (Surface::Object(i as u16), t);
                }
            }
        }
        best
    }

    fn shade(&self, surface: Surface, p: &Point3) -> [u8; 3] {
        match surface {
            Surface::Sky => SKY,
            Surface::Ground => {
                if (p.x.floor() + p.y.floor()).rem_euclid(2.0) == 0.0 {
                    GROUND_DARK
                } else {
                    GROUND_LIGHT
                }
            }
            Surface::Wall(i) => {
                let along = match self.spec.walls[i as usize].axis {
                    Axis::X => p.y,
                    Axis::Y => p.x,
                };
                let z = p.z + self.spec.camera_height;
                let course = (z / 0.25).floor();
                let stagger = if course.rem_euclid(2.0) == 0.0 { 0.0 } else { 0.25 };
                let joint = ((along + stagger) / 0.5).rem_euclid(1.0) < 0.06;
                if (z / 0.25).rem_euclid(1.0) < 0.1 || joint {
                    MORTAR
                } else {
                    BRICK
                }
            }
            Surface::Object(i) => object_color(self.spec.objects[i as usize].class),
        }
    }

    fn planes(&self) -> Vec<GroundTruthPlane> {
        let n = self.ground_normal;
        let mut planes = vec![GroundTruthPlane {
            normal: [n.x, n.y, n.z],
            offset: self.ground_offset,
        }];
        planes.extend(self.spec.walls.iter().map(|w| GroundTruthPlane {
            normal: match w.axis {
                Axis::X => [1.0, 0.0, 0.0],
                Axis::Y => [0.0, 1.0, 0.0],
            },
            offset: -w.position,
        }));
        planes
    }
}

/// Smallest circular column interval `[start, start + len)` covering every
/// occupied column.
fn circular_extent(occupied: &[bool]) -> Option<(usize, usize)> {
    let w = occupied.len();
    let first = occupied.iter().position(|&o| o)?;
    // Longest run of empty columns, walking once around from an occupied one.
    let (mut best_gap, mut best_end) = (0, first);
    let mut gap = 0;
    for step in 1..=w {
        let u = (first + step) % w;
        if occupied[u] {
            if gap > best_gap {
                best_gap = gap;
                best_end = u;
            }
            gap = 0;
        } else {
            gap += 1;
        }
    }
    Some((best_end, w - best_gap))
}

/// Renders `spec` by casting one ray through each pixel center.
pub fn render(spec: &SceneSpec) -> Result<RenderedScene, SceneError> {
    spec.validate()?;
    let (width, height) = (spec.render.width, spec.render.height);
    let geo = Geometry::new(spec);

    let mut rgb = RgbImage::new(width, height);
    let mut depth = Vec::with_capacity(width * height);
    let mut labels = Vec::with_capacity(width * height);
    let n_obj = spec.objects.len();
    let mut obj_cols = vec![vec![false; width]; n_obj];
    let mut obj_rows: Vec<Option<(usize, usize)>> = vec![None; n_obj];

    for v in 0..height {
        for u in 0..width {
            let d = pixel_to_ray(u as f64, v as f64, width, height);
            let (surface, t) = geo.trace(&d);
            rgb.set(u, v, geo.shade(surface, &(d * t)));
            depth.push(t as f32);
            labels.push(surface);
            if let Surface::Object(i) = surface {
                let i = i as usize;
                obj_cols[i][u] = true;
                obj_rows[i] = Some(match obj_rows[i] {
                    None => (v, v),
                    Some((top, _)) => (top, v),
                });
            }
        }
    }

    if spec.render.depth_noise_sigma > 0.0 {
        let mut rng = Xoshiro256StarStar::seed_from_u64(spec.render.noise_seed);
        let normal = Normal::new(0.0, spec.render.depth_noise_sigma).expect("validated sigma");
        for d in depth.iter_mut().filter(|d| d.is_finite()) {
            let noisy = *d as f64 + normal.sample(&mut rng);
            *d = noisy.max(1e-3) as f32;
        }
    }

    let gt_objects = spec
        .objects
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            let (u0, len) = circular_extent(&obj_cols[i])?;
            let (top, bottom) = obj_rows[i]?;
            Some(GroundTruthObject {
                index: i,
                class: o.class,
                bbox: BoundingBox::new(u0 as f64, top as f64, (u0 + len) as f64, (bottom + 1) as f64),
                center: o.center,
                violates_height_assumption: o.violates_height_assumption,
            })
        })
        .collect();

    let panorama = DepthPanorama::new(rgb, depth).map_err(|e| SceneError {
        field: "render".into(),
        message: e.to_string(),
    })?;
    Ok(RenderedScene {
        panorama,
        gt_planes: geo.planes(),
        gt_objects,
        labels,
    })
}
