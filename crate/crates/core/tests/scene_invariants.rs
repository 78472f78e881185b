use pano_reduce::geometry::unproject;
use pano_reduce::plane::{extract_top_planes, RansacParams};
use pano_reduce::scene::{catalog, fixture, render, Surface};

#[test]
fn labelled_depths_lie_on_their_planes() {
    for (name, spec) in catalog() {
        let scene = render(&spec.with_resolution(1024, 512)).unwrap();
        let cloud = unproject(&scene.panorama, 1);
        let mut checked = 0;
        for (p, src) in cloud.positions().iter().zip(cloud.sources()) {
            let plane = match scene.label_at(src.u as usize, src.v as usize) {
                Surface::Ground => &scene.gt_planes[0],
                Surface::Wall(i) => &scene.gt_planes[1 + i as usize],
                _ => continue,
            };
            let d = (plane.normal_vector().dot(p) + plane.offset).abs();
            // Depth is stored as f32, so allow its rounding at ~60 m.
            assert!(
                d <= 1e-4 * p.norm().max(1.0),
                "{name}: pixel ({}, {}) off its plane by {d}",
                src.u,
                src.v
            );
            checked += 1;
        }
        assert!(checked > 100_000, "{name}: only {checked} labelled points");
    }
}

#[test]
fn sky_has_no_depth_and_everything_else_does() {
    let scene = render(&fixture("street_canyon").unwrap().with_resolution(512, 256)).unwrap();
    for v in 0..256 {
        for u in 0..512 {
            let d = scene.panorama.depth_at(u, v);
            match scene.label_at(u, v) {
                Surface::Sky => assert!(!d.is_finite()),
                _ => assert!(d.is_finite() && d > 0.0),
            }
        }
    }
}

#[test]
fn ground_plane_is_recovered_on_every_fixture() {
    for (name, spec) in catalog() {
        let scene = render(&spec.with_resolution(4096, 2048)).unwrap();
        let cloud = unproject(&scene.panorama, 10);
        let planes = extract_top_planes(cloud.positions(), &RansacParams::default()).unwrap();
        let gt = &scene.gt_planes[0];
        let found = planes.iter().any(|p| {
            let dot = p.normal.dot(&gt.normal_vector());
            let angle = dot.abs().min(1.0).acos().to_degrees();
            angle <= 2.0 && (p.offset * dot.signum() - gt.offset).abs() <= 0.05
        });
        assert!(found, "{name}: ground plane not among {} planes", planes.len());
    }
}

#[test]
fn depth_noise_has_the_requested_spread() {
    let spec = fixture("flat_empty").unwrap().with_resolution(512, 256);
    let clean = render(&spec.clone()).unwrap();
    let noisy = render(&spec.with_noise(0.05, 9)).unwrap();
    let diffs: Vec<f64> = clean
        .panorama
        .depth()
        .iter()
        .zip(noisy.panorama.depth())
        .filter(|(a, _)| a.is_finite() && **a > 1.0)
        .map(|(a, b)| (*b - *a) as f64)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 0.005, "mean {mean}");
    assert!((sd - 0.05).abs() < 0.005, "sd {sd}");
}

#[test]
fn same_seed_renders_identically() {
    let spec = fixture("sloped_street")
        .unwrap()
        .with_resolution(256, 128)
        .with_noise(0.05, 3);
    let a = render(&spec).unwrap();
    let b = render(&spec).unwrap();
    assert_eq!(a.panorama.rgb(), b.panorama.rgb());
    assert!(a
        .panorama
        .depth()
        .iter()
        .zip(b.panorama.depth())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}
