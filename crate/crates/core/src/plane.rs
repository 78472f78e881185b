//! Seeded three-point RANSAC plane fitting.
//!
//! A candidate plane is built from three sampled points and scored by the
//! number of points within `distance_threshold_m` of it. The best candidate
//! maximizes the inlier count, then minimizes the mean inlier distance, then
//! comes first in the candidate sequence. [`extract_top_planes`] repeats the
//! search on the points left after removing each plane's inliers.
//!
//! Sampling is reproducible across platforms: the generator is
//! `Xoshiro256**` seeded through SplitMix64 (`seed_from_u64`), and each index
//! is drawn from a pool of `n` points as `(next_u64() as u128 * n) >> 64`.
//! Three draws form one sample; samples with a repeated index or collinear
//! points are discarded and do not count toward `max_iterations`. When the
//! pool has no more than `max_iterations` distinct triples, all of them are
//! scored in lexicographic order instead of sampling.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;

#[derive(Debug, Error, PartialEq)]
pub enum PlaneError {
    #[error("sample points are coincident or collinear")]
    DegenerateSample,
    #[error("need at least 3 points to fit a plane, got {count}")]
    TooFewPoints { count: usize },
    #[error("best plane has {best} inliers, fewer than the required {required}")]
    NoPlane { best: usize, required: usize },
    #[error("invalid RANSAC parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Horizontal,
    Vertical,
    Oblique,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub distance_threshold_m: f64,
    pub max_iterations: usize,
    pub top_k: usize,
    pub min_inliers: usize,
    pub horizontal_angle_deg: f64,
    pub seed: u64,
    /// Least-squares refit of each consensus plane on its inliers.
    pub refine: bool,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            distance_threshold_m: 0.5,
            max_iterations: 500,
            top_k: 10,
            min_inliers: 50,
            horizontal_angle_deg: 20.0,
            seed: 0,
            refine: false,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), PlaneError> {
        if !(self.distance_threshold_m > 0.0 && self.distance_threshold_m.is_finite()) {
            return Err(PlaneError::InvalidParams(format!(
                "distance_threshold_m must be positive, got {}",
                self.distance_threshold_m
            )));
        }
        if self.top_k == 0 {
            return Err(PlaneError::InvalidParams("top_k must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(PlaneError::InvalidParams("max_iterations must be at least 1".into()));
        }
        if !(self.horizontal_angle_deg > 0.0 && self.horizontal_angle_deg < 90.0) {
            return Err(PlaneError::InvalidParams(format!(
                "horizontal_angle_deg must lie in (0, 90), got {}",
                self.horizontal_angle_deg
            )));
        }
        Ok(())
    }
}

/// Plane `{p : normal·p + offset = 0}` with its inlier indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub normal: Point3,
    pub offset: f64,
    pub inliers: Vec<usize>,
    pub orientation: Orientation,
}

impl Plane {
    /// Builds a plane from a (not necessarily unit) normal, flipping it into
    /// the canonical half-space: `z > 0`, or `z == 0` and `y > 0`, or
    /// `z == y == 0` and `x ≥ 0`.
    pub fn from_normal_offset(normal: Point3, offset: f64) -> Self {
        let len = normal.norm();
        let (mut n, mut d) = (normal / len, offset / len);
        let flip = n.z < 0.0 || (n.z == 0.0 && (n.y < 0.0 || (n.y == 0.0 && n.x < 0.0)));
        if flip {
            n = -n;
            d = -d;
        }
        let orientation = orientation_of(&n, RansacParams::default().horizontal_angle_deg);
        Self {
            normal: n,
            offset: d,
            inliers: Vec::new(),
            orientation,
        }
    }

    #[inline]
    pub fn signed_distance(&self, point: &Point3) -> f64 {
        self.normal.dot(point) + self.offset
    }

    /// Angle between the normal and +z, in degrees.
    pub fn tilt_deg(&self) -> f64 {
        self.normal.z.abs().min(1.0).acos().to_degrees()
    }
}

/// Plane through three points.
pub fn plane_from_points(p1: &Point3, p2: &Point3, p3: &Point3) -> Result<Plane, PlaneError> {
    let (a, b) = (p2 - p1, p3 - p1);
    let cross = a.cross(&b);
    let scale = a.norm() * b.norm();
    if scale == 0.0 || !(cross.norm() >= 1e-12 * scale) {
        return Err(PlaneError::DegenerateSample);
    }
    Ok(Plane::from_normal_offset(cross, -cross.dot(p1)))
}

pub fn point_plane_distance(plane: &Plane, point: &Point3) -> f64 {
    plane.signed_distance(point).abs()
}

fn orientation_of(normal: &Point3, horizontal_angle_deg: f64) -> Orientation {
    let tilt = normal.z.abs().min(1.0).acos().to_degrees();
    if tilt <= horizontal_angle_deg {
        Orientation::Horizontal
    } else if tilt >= 90.0 - horizontal_angle_deg {
        Orientation::Vertical
    } else {
        Orientation::Oblique
    }
}

pub fn classify_plane(plane: &Plane, params: &RansacParams) -> Orientation {
    orientation_of(&plane.normal, params.horizontal_angle_deg)
}

#[derive(Debug, Clone, Copy)]
struct Score {
    count: usize,
    distance_sum: f64,
}

impl Score {
    /// More inliers wins, then the smaller mean distance. Equal scores keep
    /// the earlier candidate.
    fn beats(&self, other: &Score) -> bool {
        if self.count != other.count {
            return self.count > other.count;
        }
        // a/b < c/d  <=>  a*d < c*b for positive counts
        self.distance_sum * (other.count as f64) < other.distance_sum * (self.count as f64)
    }
}

struct Candidate {
    normal: Point3,
    offset: f64,
    score: Score,
}

fn score(points: &[Point3], normal: &Point3, offset: f64, threshold: f64) -> Score {
    let mut count = 0;
    let mut distance_sum = 0.0;
    for p in points {
        let d = (normal.x * p.x + normal.y * p.y + normal.z * p.z + offset).abs();
        if d <= threshold {
            count += 1;
            distance_sum += d;
        }
    }
    Score { count, distance_sum }
}

fn draw_index(rng: &mut Xoshiro256StarStar, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

fn triple_count(n: usize) -> u128 {
    let n = n as u128;
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

/// RANSAC over the sub-cloud `active`; returned inliers index `points`.
fn fit_active(
    points: &[Point3],
    active: &[usize],
    params: &RansacParams,
    rng: &mut Xoshiro256StarStar,
) -> Result<Plane, PlaneError> {
    let n = active.len();
    if n < 3 {
        return Err(PlaneError::TooFewPoints { count: n });
    }
    let pool: Vec<Point3> = active.iter().map(|&i| points[i]).collect();
    let threshold = params.distance_threshold_m;
    let mut best: Option<Candidate> = None;
    let mut consider = |i: usize, j: usize, k: usize| {
        let Ok(plane) = plane_from_points(&pool[i], &pool[j], &pool[k]) else {
            return false;
        };
        let s = score(&pool, &plane.normal, plane.offset, threshold);
        if best.as_ref().is_none_or(|b| s.beats(&b.score)) {
            best = Some(Candidate {
                normal: plane.normal,
                offset: plane.offset,
                score: s,
            });
        }
        true
    };

    if triple_count(n) <= params.max_iterations as u128 {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    consider(i, j, k);
                }
            }
        }
    } else {
        let max_attempts = params.max_iterations.saturating_mul(20).saturating_add(100);
        let mut valid = 0;
        for _ in 0..max_attempts {
            if valid == params.max_iterations {
                break;
            }
            let (i, j, k) = (draw_index(rng, n), draw_index(rng, n), draw_index(rng, n));
            if i == j || j == k || i == k {
                continue;
            }
            if consider(i, j, k) {
                valid += 1;
            }
        }
    }

    let best = best.ok_or(PlaneError::NoPlane {
        best: 0,
        required: params.min_inliers,
    })?;
    if best.score.count < params.min_inliers {
        return Err(PlaneError::NoPlane {
            best: best.score.count,
            required: params.min_inliers,
        });
    }

    let mut plane = Plane::from_normal_offset(best.normal, best.offset);
    plane.inliers = inliers_of(points, active, &plane, threshold);
    if params.refine {
        if let Some(refined) = refit(points, &plane.inliers) {
            let mut refined = refined;
            refined.inliers = inliers_of(points, active, &refined, threshold);
            if refined.inliers.len() >= plane.inliers.len() {
                plane = refined;
            }
        }
    }
    plane.orientation = classify_plane(&plane, params);
    Ok(plane)
}

fn inliers_of(points: &[Point3], active: &[usize], plane: &Plane, threshold: f64) -> Vec<usize> {
    active
        .iter()
        .copied()
        .filter(|&i| point_plane_distance(plane, &points[i]) <= threshold)
        .collect()
}

/// Total least-squares plane through `indices`.
fn refit(points: &[Point3], indices: &[usize]) -> Option<Plane> {
    if indices.len() < 3 {
        return None;
    }
    let centroid = indices.iter().map(|&i| points[i]).sum::<Point3>() / indices.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in indices {
        let d = points[i] - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let smallest = eig.eigenvalues.imin();
    let normal: Vector3<f64> = eig.eigenvectors.column(smallest).into_owned();
    if !normal.iter().all(|c| c.is_finite()) {
        return None;
    }
    Some(Plane::from_normal_offset(normal, -normal.dot(&centroid)))
}

/// Single best plane over the whole cloud.
pub fn ransac_fit(points: &[Point3], params: &RansacParams) -> Result<Plane, PlaneError> {
    params.validate()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(params.seed);
    let active: Vec<usize> = (0..points.len()).collect();
    fit_active(points, &active, params, &mut rng)
}

/// Up to `top_k` planes, each fit on the points not claimed by an earlier
/// one. Stops at the first failed fit. Inlier sets are disjoint and index the
/// original cloud.
pub fn extract_top_planes(points: &[Point3], params: &RansacParams) -> Result<Vec<Plane>, PlaneError> {
    params.validate()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(params.seed);
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut planes = Vec::new();
    let mut claimed = vec![false; points.len()];
    while planes.len() < params.top_k {
        let Ok(plane) = fit_active(points, &remaining, params, &mut rng) else {
            break;
        };
        for &i in &plane.inliers {
            claimed[i] = true;
        }
        remaining.retain(|&i| !claimed[i]);
        planes.push(plane);
    }
    Ok(planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Vector3::new(x, y, z)
    }

    #[test]
    fn plane_through_axis_points() {
        let plane = plane_from_points(&p(0., 0., 0.), &p(1., 0., 0.), &p(0., 1., 0.)).unwrap();
        assert_eq!(plane.normal, p(0., 0., 1.));
        assert_eq!(plane.offset, 0.0);
        let wall = plane_from_points(&p(0., 0., 0.), &p(0., 1., 0.), &p(0., 0., 1.)).unwrap();
        assert_eq!(wall.normal, p(1., 0., 0.));
        assert_eq!(wall.offset, 0.0);
    }

    #[test]
    fn canonical_sign_prefers_positive_z_then_y_then_x() {
        let down = plane_from_points(&p(0., 0., 0.), &p(0., 1., 0.), &p(1., 0., 0.)).unwrap();
        assert_eq!(down.normal, p(0., 0., 1.));
        let left = Plane::from_normal_offset(p(0., -2., 0.), 4.0);
        assert_eq!((left.normal, left.offset), (p(0., 1., 0.), -2.0));
        let back = Plane::from_normal_offset(p(-1., 0., 0.), 1.0);
        assert_eq!((back.normal, back.offset), (p(1., 0., 0.), -1.0));
    }

    #[test]
    fn collinear_and_coincident_samples_are_degenerate() {
        let err = plane_from_points(&p(0., 0., 0.), &p(1., 1., 1.), &p(2., 2., 2.));
        assert_eq!(err.unwrap_err(), PlaneError::DegenerateSample);
        let err = plane_from_points(&p(1., 2., 3.), &p(1., 2., 3.), &p(0., 0., 1.));
        assert_eq!(err.unwrap_err(), PlaneError::DegenerateSample);
    }

    #[test]
    fn sample_points_lie_on_their_plane() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(7);
        for _ in 0..1000 {
            let pts: Vec<Point3> = (0..3)
                .map(|_| {
                    p(
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-5.0..5.0),
                    )
                })
                .collect();
            let plane = plane_from_points(&pts[0], &pts[1], &pts[2]).unwrap();
            let scale = pts.iter().map(|q| q.norm()).fold(1.0, f64::max);
            assert!((plane.normal.norm() - 1.0).abs() < 1e-9);
            assert!(plane.normal.z >= 0.0);
            for q in &pts {
                assert!(point_plane_distance(&plane, q) <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn distance_examples() {
        let ground = Plane::from_normal_offset(p(0., 0., 1.), 0.0);
        assert!((point_plane_distance(&ground, &p(5., 5., 0.4)) - 0.4).abs() < 1e-15);
        assert_eq!(point_plane_distance(&ground, &p(3., -1., 0.)), 0.0);
        assert_eq!(point_plane_distance(&ground, &p(0., 0., 0.5)), 0.5);
    }

    #[test]
    fn point_exactly_at_threshold_is_an_inlier() {
        let mut pts: Vec<Point3> = (0..10)
            .flat_map(|i| (0..10).map(move |j| p(i as f64, j as f64, 0.)))
            .collect();
        pts.push(p(0., 0., 0.5));
        let params = RansacParams {
            min_inliers: 3,
            ..Default::default()
        };
        let plane = ransac_fit(&pts, &params).unwrap();
        assert!(plane.inliers.contains(&100));
    }

    #[test]
    fn classification_bands() {
        let params = RansacParams::default();
        let flat = Plane::from_normal_offset(p(0., 0., 1.), 0.);
        let wall = Plane::from_normal_offset(p(1., 0., 0.), 0.);
        let ramp = Plane::from_normal_offset(p(1., 0., 1.), 0.);
        assert_eq!(classify_plane(&flat, &params), Orientation::Horizontal);
        assert_eq!(classify_plane(&wall, &params), Orientation::Vertical);
        assert_eq!(classify_plane(&ramp, &params), Orientation::Oblique);
    }

    #[test]
    fn too_few_points() {
        let pts = vec![p(0., 0., 0.), p(1., 0., 0.)];
        assert_eq!(
            ransac_fit(&pts, &RansacParams::default()).unwrap_err(),
            PlaneError::TooFewPoints { count: 2 }
        );
        assert!(extract_top_planes(&[], &RansacParams::default()).unwrap().is_empty());
    }

    #[test]
    fn exact_plane_claims_every_point() {
        let pts: Vec<Point3> = (0..20)
            .flat_map(|i| (0..20).map(move |j| p(i as f64 * 0.5, j as f64 * 0.5, -2.5)))
            .collect();
        let params = RansacParams::default();
        let plane = ransac_fit(&pts, &params).unwrap();
        assert_eq!(plane.inliers.len(), pts.len());
        let planes = extract_top_planes(&pts, &params).unwrap();
        assert_eq!(planes.len(), 1);
        assert_eq!(planes[0].inliers.len(), pts.len());
    }

    #[test]
    fn rejects_invalid_params() {
        let pts = vec![p(0., 0., 0.); 3];
        for bad in [
            RansacParams {
                distance_threshold_m: 0.0,
                ..Default::default()
            },
            RansacParams {
                top_k: 0,
                ..Default::default()
            },
            RansacParams {
                horizontal_angle_deg: 90.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(ransac_fit(&pts, &bad), Err(PlaneError::InvalidParams(_))));
        }
    }

    #[test]
    fn refinement_keeps_inliers_within_threshold() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(3);
        let pts: Vec<Point3> = (0..400)
            .map(|_| {
                p(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    -1.0 + rng.random_range(-0.1..0.1),
                )
            })
            .collect();
        let params = RansacParams {
            refine: true,
            ..Default::default()
        };
        let plane = ransac_fit(&pts, &params).unwrap();
        assert_eq!(plane.inliers.len(), 400);
        assert!((plane.offset - 1.0).abs() < 0.02);
        for &i in &plane.inliers {
            assert!(point_plane_distance(&plane, &pts[i]) <= params.distance_threshold_m);
        }
    }
}
