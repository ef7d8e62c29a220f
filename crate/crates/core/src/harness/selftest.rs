//! Fast randomized invariant checks runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::base_control::{ema_step, EmaFilterState};
use crate::bus::{decode, encode, Envelope};
use crate::frames::{normalize_angle, Pose2, Pose3, Twist2};
use crate::manip::{lift_step, ee_hold_target, LiftCommand, LiftState, LIFT_MAX, LIFT_MIN, LIFT_SPEED_MAX};
use crate::mapping::{CostMap, GridGeometry, LETHAL};
use crate::planner::{plan_cells, Cell, PlannerParams};
use crate::swerve::{forward_kinematics, inverse_kinematics, module_velocities, optimize_module, ChassisGeometry, ModuleState};

use super::{run, ScenarioConfig, ScenarioId};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, limit: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= limit,
        detail: format!("worst {worst:.3e} (limit {limit:.1e})"),
    }
}

fn twist(rng: &mut ChaCha8Rng) -> Twist2 {
    Twist2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-1.2..1.2))
}

fn swerve_round_trip(rng: &mut ChaCha8Rng) -> CheckResult {
    let g = ChassisGeometry::default();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v = twist(rng);
        let m = inverse_kinematics(&v, &g, &[0.0; 4]);
        for (s, (vx, vy)) in m.iter().zip(module_velocities(&v, &g)) {
            let (mx, my) = s.velocity();
            worst = worst.max((mx - vx).abs()).max((my - vy).abs());
        }
        let back = forward_kinematics(&m, &g);
        worst = worst
            .max((back.vx - v.vx).abs())
            .max((back.vy - v.vy).abs())
            .max((back.omega - v.omega).abs());
    }
    check("swerve inverse/forward kinematics", worst, 1e-9)
}

fn shortest_turn(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let cur = rng.random_range(-3.2..3.2);
        let target = ModuleState::new(rng.random_range(-3.2..3.2), rng.random_range(-0.3..0.3));
        let out = optimize_module(cur, target);
        let excess = normalize_angle(out.steer - cur).abs() - std::f64::consts::FRAC_PI_2;
        let (ax, ay) = out.velocity();
        let (bx, by) = target.velocity();
        worst = worst.max(excess.max(0.0)).max((ax - bx).abs()).max((ay - by).abs());
    }
    check("shortest turn within a quarter turn", worst, 1e-12)
}

fn ema_bounded(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut state = EmaFilterState::new(0.2);
    let mut prev = Twist2::ZERO;
    for _ in 0..10_000 {
        let cmd = twist(rng);
        let out = ema_step(&mut state, &cmd);
        for (o, (p, c)) in [(out.vx, (prev.vx, cmd.vx)), (out.vy, (prev.vy, cmd.vy)), (out.omega, (prev.omega, cmd.omega))] {
            worst = worst.max(p.min(c) - o).max(o - p.max(c));
        }
        prev = out;
    }
    check("velocity filter stays between previous and command", worst, 0.0)
}

fn lift_contract(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut s = LiftState::new(0.9);
    for _ in 0..10_000 {
        let cmd = if rng.random_bool(0.5) {
            LiftCommand::Velocity(rng.random_range(-1.0..1.0))
        } else {
            LiftCommand::Height(rng.random_range(0.0..2.0))
        };
        s = lift_step(&s, &cmd, 0.005);
        worst = worst
            .max(LIFT_MIN - s.height)
            .max(s.height - LIFT_MAX)
            .max(s.velocity.abs() - LIFT_SPEED_MAX);
    }
    check("lift height and speed bounds", worst, 1e-12)
}

fn hold_identity(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    let pose = |rng: &mut ChaCha8Rng| {
        Pose3::from_pose2(
            Pose2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-3.1..3.1)),
            0.0,
        )
    };
    for _ in 0..1000 {
        let b0 = pose(rng);
        let now = pose(rng);
        let e0 = Pose3::from_translation(rng.random_range(-1.0..1.0), rng.random_range(0.0..1.5), rng.random_range(0.0..1.0));
        let world = now.compose(&ee_hold_target(&b0, &e0, &now));
        worst = worst.max((world.translation - b0.compose(&e0).translation).norm());
    }
    check("world-frame hold identity", worst, 1e-9)
}

fn planner_avoids_lethal(rng: &mut ChaCha8Rng) -> CheckResult {
    let geometry = GridGeometry::new(0.0, 0.0, 0.05, 40, 40);
    let mut touched = 0.0;
    for _ in 0..20 {
        let mut map = CostMap::new(geometry);
        for _ in 0..300 {
            let (c, r) = (rng.random_range(0..40), rng.random_range(0..40));
            map.set_cost(c, r, if rng.random_bool(0.6) { LETHAL } else { rng.random_range(1..200) });
        }
        map.set_cost(0, 0, 0);
        map.set_cost(39, 39, 0);
        if let Ok(path) = plan_cells(&map, Cell::new(0, 0), &[Cell::new(39, 39)], &PlannerParams::default()) {
            touched += path.cells.iter().filter(|c| map.is_lethal(c.col, c.row)).count() as f64;
        }
    }
    check("planned paths avoid lethal cells", touched, 0.0)
}

fn frame_round_trip(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut bad = 0.0;
    for i in 0..200 {
        let len = rng.random_range(0..512);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let env = Envelope::publish("cloud", i, rng.random(), payload);
        match encode(&env).and_then(|b| decode(&b)) {
            Ok(back) if back == env => {}
            _ => bad += 1.0,
        }
    }
    check("bus frame encode/decode", bad, 0.0)
}

fn determinism() -> CheckResult {
    let cfg = ScenarioConfig::new(ScenarioId::Wholebody, 7);
    let a = run(&cfg).map(|r| r.sim_json());
    let b = run(&cfg).map(|r| r.sim_json());
    let same = matches!((&a, &b), (Ok(x), Ok(y)) if x == y);
    CheckResult {
        name: "identical runs give identical metrics",
        passed: same,
        detail: if same { "byte-identical".into() } else { "metrics differ".into() },
    }
}

pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        swerve_round_trip(&mut rng),
        shortest_turn(&mut rng),
        ema_bounded(&mut rng),
        lift_contract(&mut rng),
        hold_identity(&mut rng),
        planner_avoids_lethal(&mut rng),
        frame_round_trip(&mut rng),
        determinism(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_selftest(11) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
