use super::{Axis, RenderSettings, SceneObject, SceneSpec, Wall};
use crate::detection::ObjectClass;

pub const FIXTURE_NAMES: [&str; 4] = ["flat_empty", "street_canyon", "sloped_street", "rooftop_person"];

const CAMERA_HEIGHT: f64 = 2.5;

fn base() -> SceneSpec {
    SceneSpec {
        camera_height: CAMERA_HEIGHT,
        ground_z: 0.0,
        ground_slope_deg: 0.0,
        ground_slope_azimuth_deg: 0.0,
        walls: Vec::new(),
        objects: Vec::new(),
        render: RenderSettings::default(),
    }
}

/// Face billboard whose top edge is 1.8 m above the ground at `(x, y)`.
fn face(spec: &SceneSpec, x: f64, y: f64) -> SceneObject {
    SceneObject {
        class: ObjectClass::Face,
        center: [x, y, spec.ground_height(x, y) + 1.6],
        width: 0.25,
        height: 0.4,
        violates_height_assumption: false,
    }
}

/// Plate billboard centred 0.5 m above the ground at `(x, y)`.
fn plate(spec: &SceneSpec, x: f64, y: f64) -> SceneObject {
    SceneObject {
        class: ObjectClass::Plate,
        center: [x, y, spec.ground_height(x, y) + 0.5],
        width: 0.52,
        height: 0.12,
        violates_height_assumption: false,
    }
}

fn flat_empty() -> SceneSpec {
    base()
}

/// Two facades at `y = ±8` along a 60 m street, open at both ends.
fn street_canyon() -> SceneSpec {
    let mut s = base();
    for position in [-8.0, 8.0] {
        s.walls.push(Wall {
            axis: Axis::Y,
            position,
            from: -30.0,
            to: 30.0,
            height: 10.0,
        });
    }
    s.objects = vec![
        face(&s, 11.0, 1.0),
        plate(&s, 14.0, -2.0),
        face(&s, 19.0, 0.5),
        plate(&s, -12.0, 2.0),
        face(&s, -16.0, -1.5),
        plate(&s, 24.0, -3.0),
    ];
    s
}

/// Open ground rising 8° toward +x.
fn sloped_street() -> SceneSpec {
    let mut s = base();
    s.ground_slope_deg = 8.0;
    s.objects = vec![
        face(&s, 10.0, 1.0),
        plate(&s, -10.0, -1.0),
        face(&s, 3.0, 9.0),
        plate(&s, -6.0, -7.0),
        face(&s, 15.0, -2.0),
    ];
    s
}

/// A low building ahead with a person on its roof, plus one pedestrian at
/// street level behind the camera.
fn rooftop_person() -> SceneSpec {
    let mut s = base();
    s.walls.push(Wall {
        axis: Axis::X,
        position: 12.0,
        from: -6.0,
        to: 6.0,
        height: 8.0,
    });
    s.objects = vec![
        SceneObject {
            class: ObjectClass::Face,
            center: [12.5, 0.0, 9.6],
            width: 0.25,
            height: 0.4,
            violates_height_assumption: true,
        },
        face(&s, -10.0, 1.0),
    ];
    s
}

/// Every fixture by name, at the default 1024×512 resolution.
pub fn catalog() -> Vec<(&'static str, SceneSpec)> {
    FIXTURE_NAMES
        .iter()
        .map(|&name| (name, fixture(name).expect("listed fixture")))
        .collect()
}

pub fn fixture(name: &str) -> Option<SceneSpec> {
    Some(match name {
        "flat_empty" => flat_empty(),
        "street_canyon" => street_canyon(),
        "sloped_street" => sloped_street(),
        "rooftop_person" => rooftop_person(),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::render;

    #[test]
    fn every_fixture_is_valid() {
        for (name, spec) in catalog() {
            spec.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(fixture("nope").is_none());
    }

    #[test]
    fn flat_empty_has_one_ground_plane() {
        let scene = render(&fixture("flat_empty").unwrap()).unwrap();
        assert_eq!(scene.gt_planes.len(), 1);
        assert_eq!(scene.gt_planes[0].normal, [0.0, 0.0, 1.0]);
        assert_eq!(scene.gt_planes[0].offset, CAMERA_HEIGHT);
        assert!(scene.gt_objects.is_empty());
    }

    #[test]
    fn street_canyon_counts() {
        let scene = render(&fixture("street_canyon").unwrap()).unwrap();
        assert_eq!(scene.gt_planes.len(), 3);
        assert_eq!(scene.gt_objects.len(), 6);
    }

    #[test]
    fn rooftop_person_is_flagged_and_visible() {
        let spec = fixture("rooftop_person").unwrap();
        assert!(spec.object_top_above_ground(&spec.objects[0]) > 2.0);
        let scene = render(&spec).unwrap();
        let flagged: Vec<_> = scene
            .gt_objects
            .iter()
            .filter(|o| o.violates_height_assumption)
            .collect();
        assert_eq!(flagged.len(), 1);
        assert_eq!(scene.gt_objects.len(), 2);
    }

    #[test]
    fn conforming_objects_stay_under_two_meters() {
        for (_, spec) in catalog() {
            for o in spec.objects.iter().filter(|o| !o.violates_height_assumption) {
                assert!(spec.object_top_above_ground(o) <= 2.0);
            }
        }
    }
}
