use proptest::prelude::*;
use vsg_core::geometry::{axis_angle, back_project, fov_fraction, project};
use vsg_core::{Intrinsics, Pose, Vec3};

fn intrinsics() -> impl Strategy<Value = Intrinsics> {
    (16u32..2000, 16u32..2000, 0.3..3.0f64, 0.5..2.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(w, h, vfov, aspect, px, py)| {
        let fy = f64::from(h) / (2.0 * (vfov / 2.0).tan());
        Intrinsics::new(fy * aspect, fy, px * f64::from(w - 1), py * f64::from(h - 1), w, h).unwrap()
    })
}

fn pose() -> impl Strategy<Value = Pose> {
    (
        proptest::array::uniform3(-1.0..1.0f64),
        -3.1..3.1f64,
        proptest::array::uniform3(-10.0..10.0f64),
    )
        .prop_filter("axis must be non-zero", |(a, _, _)| Vec3::from(*a).norm() > 1e-3)
        .prop_map(|(axis, angle, t)| Pose::new(axis_angle(&Vec3::from(axis), angle), Vec3::from(t)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn project_inverts_back_project(intr in intrinsics(), pose in pose(), fu in 0.0..1.0f64, fv in 0.0..1.0f64, d in 0.05..50.0f64) {
        let (u, v) = (fu * f64::from(intr.width()), fv * f64::from(intr.height()));
        let p = back_project(u, v, d, &intr, &pose).unwrap();
        let (u2, v2, d2) = project(&p, &intr, &pose).unwrap();
        let scale = u.abs().max(v.abs()).max(1.0);
        prop_assert!((u2 - u).abs() <= 1e-9 * scale, "u {u} -> {u2}");
        prop_assert!((v2 - v).abs() <= 1e-9 * scale, "v {v} -> {v2}");
        prop_assert!((d2 - d).abs() <= 1e-9 * d);
    }

    #[test]
    fn back_project_is_linear_in_depth(intr in intrinsics(), pose in pose(), u in 0.0..100.0f64, v in 0.0..100.0f64, d in 0.05..20.0f64) {
        let t = *pose.translation();
        let one = back_project(u, v, d, &intr, &pose).unwrap() - t;
        let two = back_project(u, v, 2.0 * d, &intr, &pose).unwrap() - t;
        prop_assert!((two - 2.0 * one).norm() <= 1e-9 * two.norm().max(1.0));
    }

    #[test]
    fn fov_fraction_shrinks_with_distance(r in 0.01..2.0f64, near in 1.001..10.0f64, gap in 1e-3..10.0f64, vfov in 0.3..3.0f64, dir in proptest::array::uniform3(-1.0..1.0f64)) {
        let dir = Vec3::from(dir);
        prop_assume!(dir.norm() > 1e-3);
        let dir = dir.normalize();
        let pose = Pose::identity();
        let a = fov_fraction(&(dir * (r * near)), r, &pose, vfov);
        let b = fov_fraction(&(dir * (r * near + gap)), r, &pose, vfov);
        prop_assert!(b < a, "{a} then {b}");
    }
}
