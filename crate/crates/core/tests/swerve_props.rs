use std::f64::consts::{FRAC_PI_2, PI};

use mobman::frames::{normalize_angle, Twist2};
use mobman::swerve::{
    clamp_twist, forward_kinematics, inverse_kinematics, module_velocities, optimize_module, ChassisGeometry,
    ModuleState, VelocityLimits,
};
use proptest::prelude::*;

fn twist() -> impl Strategy<Value = Twist2> {
    (-1.0..1.0f64, -1.0..1.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| Twist2::new(a, b, c))
}

/// Corner positions in the robot frame, x forward and y left, in module order.
fn corners(g: &ChassisGeometry) -> [(f64, f64); 4] {
    let (w, l) = (g.half_width, g.half_length);
    [(l, -w), (l, w), (-l, w), (-l, -w)]
}

proptest! {
    #[test]
    fn rigid_body_velocity_at_each_corner(v in twist()) {
        let g = ChassisGeometry::default();
        for ((rx, ry), (mx, my)) in corners(&g).into_iter().zip(module_velocities(&v, &g)) {
            // v + ω × r in the plane.
            prop_assert!((mx - (v.vx - v.omega * ry)).abs() < 1e-9);
            prop_assert!((my - (v.vy + v.omega * rx)).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_then_forward_is_exact(v in twist(), prev in proptest::array::uniform4(-PI..PI)) {
        let g = ChassisGeometry::default();
        let back = forward_kinematics(&inverse_kinematics(&v, &g, &prev), &g);
        prop_assert!((back.vx - v.vx).abs() <= 1e-9);
        prop_assert!((back.vy - v.vy).abs() <= 1e-9);
        prop_assert!((back.omega - v.omega).abs() <= 1e-9);
    }

    #[test]
    fn shortest_turn_bounds_steering(cur in -PI..PI, steer in -PI..PI, speed in -1.0..1.0f64) {
        let target = ModuleState::new(steer, speed);
        let out = optimize_module(cur, target);
        prop_assert!(normalize_angle(out.steer - cur).abs() <= FRAC_PI_2 + 1e-12);
        prop_assert_eq!(out.speed.abs(), target.speed.abs());
        let (a, b) = (out.velocity(), target.velocity());
        prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    }

    #[test]
    fn clamp_is_idempotent_and_shrinks(v in twist()) {
        let lim = VelocityLimits::default();
        let once = clamp_twist(&v, &lim);
        prop_assert_eq!(clamp_twist(&once, &lim), once);
        prop_assert!(once.linear_speed() <= v.linear_speed() + 1e-15);
        prop_assert!(once.linear_speed() <= lim.v_max + 1e-12);
        prop_assert!(once.omega.abs() <= v.omega.abs());
        prop_assert!(once.omega.abs() <= lim.omega_max);
    }
}

#[test]
fn pure_rotation_module_speed() {
    let g = ChassisGeometry::default();
    let r = g.half_width.hypot(g.half_length);
    assert!((r - 0.18531).abs() < 1e-5);
    for w in [-1.0, 0.3, 1.0] {
        for m in inverse_kinematics(&Twist2::new(0.0, 0.0, w), &g, &[0.0; 4]) {
            assert!((m.speed.abs() - r * w.abs()).abs() < 1e-12);
        }
    }
}
