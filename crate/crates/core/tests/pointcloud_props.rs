mod common;

use cbf::kernel::Vec3;
use cbf::pointcloud::{
    estimate_normals, generate_sphere_nodes, knn, mean_spacing, perturb_cloud, PointCloud,
    SphereLevel,
};
use common::{brute_knn, random_rotation, rng};
use proptest::prelude::*;
use rand::Rng;

fn random_cloud(seed: u64, n: usize) -> PointCloud {
    let mut rng = rng(seed);
    let pts = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    PointCloud::new(pts, None).unwrap()
}

fn assert_knn_matches_brute_force(cloud: &PointCloud, k: usize) {
    let lists = knn(cloud, k).unwrap();
    for i in 0..cloud.len() {
        let want = brute_knn(cloud.points(), i, k);
        let got: Vec<(usize, f64)> = lists.indices[i]
            .iter()
            .copied()
            .zip(lists.distances[i].iter().copied())
            .collect();
        assert_eq!(got.len(), want.len());
        for ((gi, gd), (wi, wd)) in got.iter().zip(&want) {
            assert_eq!(gi, wi, "point {i}");
            assert!((gd - wd).abs() <= 1e-15 * wd.max(1.0));
        }
    }
}

#[test]
fn knn_random_100_points_k6() {
    assert_knn_matches_brute_force(&random_cloud(1, 100), 6);
}

#[test]
fn knn_on_sphere_with_ties() {
    // octahedral symmetry produces many exactly equal distances
    let cloud = generate_sphere_nodes(SphereLevel::new(2).unwrap()).unwrap();
    assert_knn_matches_brute_force(&cloud, 8);
}

#[test]
fn mean_spacing_level4_matches_brute_force() {
    let cloud = generate_sphere_nodes(SphereLevel::new(4).unwrap()).unwrap();
    let pts = cloud.points();
    let brute = (0..pts.len())
        .map(|i| brute_knn(pts, i, 1)[0].1)
        .sum::<f64>()
        / pts.len() as f64;
    assert_eq!(mean_spacing(pts).unwrap(), brute);
}

#[test]
fn level4_normals_are_radial() {
    let cloud = generate_sphere_nodes(SphereLevel::new(4).unwrap()).unwrap();
    let est = estimate_normals(&cloud.without_normals(), 12).unwrap();
    for (p, n) in est.points().iter().zip(est.require_normals().unwrap()) {
        let angle = p.normalize().dot(n).abs().min(1.0).acos();
        assert!(angle < 5f64.to_radians());
    }
}

#[test]
fn node_counts_follow_closed_form() {
    for level in 0..=6u32 {
        let cloud = generate_sphere_nodes(SphereLevel::new(level).unwrap()).unwrap();
        assert_eq!(cloud.len(), 4 * 4usize.pow(level) + 2);
    }
    assert_eq!(SphereLevel::new(3).unwrap().node_count(), 258);
    assert_eq!(SphereLevel::new(5).unwrap().node_count(), 4098);
}

#[test]
fn perturbation_examples() {
    let sphere = generate_sphere_nodes(SphereLevel::new(3).unwrap()).unwrap();
    let same = perturb_cloud(&sphere, 0.0, 9).unwrap();
    for (a, b) in same.points().iter().zip(sphere.points()) {
        for k in 0..3 {
            assert_eq!(a[k].to_bits(), b[k].to_bits());
        }
    }
    let a = perturb_cloud(&sphere, 0.05, 42).unwrap();
    let b = perturb_cloud(&sphere, 0.05, 42).unwrap();
    assert_eq!(a.points(), b.points());
    assert_eq!(a.normals(), b.normals());
    for p in a.points() {
        let r = p.norm();
        assert!((0.95..=1.05).contains(&r), "{r}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn knn_agrees_with_brute_force(seed in any::<u64>(), n in 5usize..=500, k in 1usize..12) {
        let cloud = random_cloud(seed, n);
        assert_knn_matches_brute_force(&cloud, k.min(n - 1));
    }

    #[test]
    fn normals_rotate_with_the_cloud(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rot = random_rotation(&mut r);
        let cloud = perturb_cloud(
            &generate_sphere_nodes(SphereLevel::new(2).unwrap()).unwrap(),
            0.03,
            seed,
        )
        .unwrap()
        .without_normals();
        let base = estimate_normals(&cloud, 12).unwrap();
        let rotated = estimate_normals(&cloud.map(|p| rot * p).unwrap(), 12).unwrap();
        for (n, m) in base.require_normals().unwrap().iter().zip(rotated.require_normals().unwrap()) {
            let rn = rot * n;
            // equal up to the orientation rule's sign
            let d = (rn - m).norm().min((rn + m).norm());
            prop_assert!(d <= 1e-8, "{}", d);
        }
    }

    #[test]
    fn perturbation_is_bounded_by_amplitude(seed in any::<u64>(), a in 0.0..0.1f64) {
        let sphere = generate_sphere_nodes(SphereLevel::new(2).unwrap()).unwrap();
        let moved = perturb_cloud(&sphere, a, seed).unwrap();
        for (p, q) in moved.points().iter().zip(sphere.points()) {
            prop_assert!((p - q).norm() <= a * (1.0 + 1e-15));
        }
    }
}
