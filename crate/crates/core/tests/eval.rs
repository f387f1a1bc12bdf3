use proptest::prelude::*;
use vsg_core::eval::{align_rigid, nearest_view_angle, nearest_view_distance, AnglePairing};
use vsg_core::geometry::axis_angle;
use vsg_core::{Pose, Vec3};

fn poses(max: usize) -> impl Strategy<Value = Vec<Pose>> {
    proptest::collection::vec(
        (proptest::array::uniform3(-1.0..1.0f64), -3.0..3.0f64, proptest::array::uniform3(-5.0..5.0f64)),
        1..max,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(axis, angle, t)| {
                let axis = if Vec3::from(axis).norm() < 1e-3 { Vec3::y() } else { Vec3::from(axis) };
                Pose::new(axis_angle(&axis, angle), Vec3::from(t)).unwrap()
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn extra_training_pose_never_raises_mean_distance(train in poses(20), gt in poses(20), extra in poses(2)) {
        let before = nearest_view_distance(&train, &gt).unwrap().mean;
        let mut more = train.clone();
        more.push(extra[0]);
        let after = nearest_view_distance(&more, &gt).unwrap().mean;
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn a_set_against_itself_is_zero(set in poses(30)) {
        for pairing in [AnglePairing::NearestPosition, AnglePairing::MinAngle] {
            let s = nearest_view_angle(&set, &set, pairing).unwrap();
            prop_assert!(s.mean.abs() < 1e-6 && s.sd.abs() < 1e-6);
        }
        prop_assert_eq!(nearest_view_distance(&set, &set).unwrap().mean, 0.0);
    }

    #[test]
    fn align_rigid_recovers_similarity(
        pts in proptest::collection::vec(proptest::array::uniform3(-3.0..3.0f64), 4..30),
        axis in proptest::array::uniform3(-1.0..1.0f64),
        angle in -3.0..3.0f64,
        scale in 0.2..5.0f64,
        shift in proptest::array::uniform3(-10.0..10.0f64),
    ) {
        let a: Vec<Vec3> = pts.iter().map(|p| Vec3::from(*p)).collect();
        let centroid = a.iter().fold(Vec3::zeros(), |s, p| s + p) / a.len() as f64;
        let spread = a.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);
        prop_assume!(spread > 0.5);
        // reject nearly collinear clouds
        let cov = a.iter().fold(vsg_core::geometry::Mat3::zeros(), |m, p| m + (p - centroid) * (p - centroid).transpose());
        let ev = cov.symmetric_eigenvalues();
        let mut ev: Vec<f64> = ev.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        prop_assume!(ev[1] > 1e-2 * ev[2]);
        let axis = if Vec3::from(axis).norm() < 1e-3 { Vec3::x() } else { Vec3::from(axis) };
        let r = axis_angle(&axis, angle);
        let t = Vec3::from(shift);
        let b: Vec<Vec3> = a.iter().map(|p| scale * (r * p) + t).collect();
        let sim = align_rigid(&a, &b).unwrap();
        prop_assert!((sim.scale - scale).abs() < 1e-9 * scale);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((sim.apply_point(p) - q).norm() < 1e-9 * (1.0 + q.norm()));
        }
    }
}
