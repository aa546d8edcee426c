use hopcurve_core::{clip_to_box, ParameterBox, PolicyParams, RobotParams, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fk_ik_round_trip_on_random_poses() {
    let p = RobotParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let body = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(0.1..0.5));
        let hip = rng.random_range(-1.2..1.5);
        let ankle = rng.random_range(0.3..3.0);
        let foot = p.forward_kinematics(body, hip, ankle).foot;
        let back = p.inverse_kinematics(body, foot).unwrap();
        let again = p.forward_kinematics(body, back.hip, back.ankle).foot;
        worst = worst.max((again - foot).norm());
        assert!((back.ankle - ankle).abs() < 1e-6);
    }
    assert!(worst < 1e-9, "worst round-trip error {worst} m");
}

#[test]
fn ik_rejects_unreachable_feet() {
    let p = RobotParams::default();
    let body = Vec2::new(0.0, 1.0);
    assert!(p.inverse_kinematics(body, Vec2::new(0.0, 0.0)).is_err());
    assert!(p.inverse_kinematics(body, body).is_err());
}

#[test]
fn knee_sits_behind_the_virtual_leg() {
    let p = RobotParams::default();
    let body = Vec2::new(0.0, 0.3);
    let pose = p.forward_kinematics(body, 0.0, p.ankle_rest_angle);
    assert!(pose.knee.x < 0.0);
    assert!((pose.foot.x).abs() < 1e-12);
    assert!(((body - pose.knee).norm() - p.upper_len).abs() < 1e-12);
    assert!(((pose.foot - pose.knee).norm() - p.lower_len).abs() < 1e-12);
}

#[test]
fn jacobian_matches_finite_differences() {
    let p = RobotParams::default();
    let (hip, ankle) = (0.3, 2.0);
    let j = p.stance_jacobian(hip, ankle).unwrap();
    // body relative to a pinned foot at the origin
    let body = |h: f64, a: f64| {
        let f = p.forward_kinematics(Vec2::default(), h, a).foot;
        Vec2::new(-f.x, -f.z)
    };
    let e = 1e-6;
    let da = (body(hip, ankle + e) - body(hip, ankle - e)) * (0.5 / e);
    let dh = (body(hip + e, ankle) - body(hip - e, ankle)) * (0.5 / e);
    assert!((j[0][0] - da.x).abs() < 1e-6 && (j[1][0] - da.z).abs() < 1e-6);
    assert!((j[0][1] - dh.x).abs() < 1e-6 && (j[1][1] - dh.z).abs() < 1e-6);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    assert!((det.abs() - p.upper_len * p.lower_len * ankle.sin()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn clipping_lands_in_the_box(t0 in -200.0..200.0f64, t1 in -200.0..200.0f64) {
        let b = ParameterBox::default();
        let q = clip_to_box(PolicyParams::new(t0, t1), &b);
        prop_assert!(b.contains(&q));
        if b.contains(&PolicyParams::new(t0, t1)) {
            prop_assert_eq!((q.theta0, q.theta1), (t0, t1));
        }
    }

    #[test]
    fn leg_length_is_monotone_in_the_ankle(a in 0.1..3.0f64) {
        let p = RobotParams::default();
        prop_assert!(p.virtual_leg_length(a + 0.01) > p.virtual_leg_length(a));
        prop_assert!(p.virtual_leg_length_rate(a) > 0.0);
    }
}
