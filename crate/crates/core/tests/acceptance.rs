mod oracles;

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use mobman::base_control::{ema_step, pid_step, EmaFilterState, PidGains, PidMemory};
use mobman::frames::{normalize_angle, Pose2, Pose3, Twist2};
use mobman::harness::{run, ScenarioConfig, ScenarioId};
use mobman::manip::{
    ee_hold_target, lift_step, shape_command, simulate_two_link, stiffness_torque, GravityModel, JointState,
    LiftCommand, LiftState, ShaperLimits, StiffnessGains, TwoLinkArm, LIFT_MAX, LIFT_MIN, LIFT_SPEED_MAX,
};
use mobman::mapping::{
    inflate, instantaneous_floor, reject_outliers, CellState, CostMap, GridGeometry, OccupancyGrid, PointCloud, LETHAL,
};
use mobman::planner::{plan_cells, Cell, PlannerParams};
use mobman::sim::{step_world, RobotBody, Scene, StepCommands, WorldState, SIM_STEP};
use mobman::swerve::{inverse_kinematics, module_velocities, optimize_module, ChassisGeometry, ModuleState};
use nalgebra::{UnitQuaternion, Vector3};
use oracles::dijkstra;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(limit: Duration, started: Instant) -> (bool, f64) {
    let t = started.elapsed();
    (t < limit, t.as_secs_f64())
}

fn swerve_kinematics() -> Outcome {
    let started = Instant::now();
    let g = ChassisGeometry::default();
    let corners = [
        (g.half_length, -g.half_width),
        (g.half_length, g.half_width),
        (-g.half_length, g.half_width),
        (-g.half_length, -g.half_width),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v = Twist2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0));
        let modules = inverse_kinematics(&v, &g, &[0.0; 4]);
        for (i, &(rx, ry)) in corners.iter().enumerate() {
            let (ex, ey) = (v.vx - v.omega * ry, v.vy + v.omega * rx);
            let (mx, my) = module_velocities(&v, &g)[i];
            let (sx, sy) = modules[i].velocity();
            worst = worst.max((mx - ex).abs()).max((my - ey).abs()).max((sx - ex).abs()).max((sy - ey).abs());
        }
    }
    let mut rot: f64 = 0.0;
    for w in [-1.0, -0.5, 0.25, 1.0] {
        for m in inverse_kinematics(&Twist2::new(0.0, 0.0, w), &g, &[0.0; 4]) {
            rot = rot.max((m.speed.abs() - 0.18531 * w.abs()).abs());
        }
    }
    let (fast, secs) = within(Duration::from_secs(1), started);
    outcome(
        worst < 1e-9 && rot < 1e-5 && fast,
        format!("max error {worst:.2e}, rotation speed error {rot:.2e}, {secs:.3} s"),
    )
}

fn shortest_turn() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_turn: f64 = 0.0;
    let mut worst_speed: f64 = 0.0;
    for _ in 0..100_000 {
        let cur = rng.random_range(-PI..PI);
        let target = ModuleState::new(rng.random_range(-PI..PI), rng.random_range(-1.0..1.0));
        let out = optimize_module(cur, target);
        worst_turn = worst_turn.max(normalize_angle(out.steer - cur).abs());
        worst_speed = worst_speed.max((out.speed.abs() - target.speed.abs()).abs());
    }
    let ex = optimize_module(0.0, ModuleState::new(170f64.to_radians(), 0.2));
    let example = (normalize_angle(ex.steer) - (-10f64).to_radians()).abs() < 1e-12 && ex.speed == -0.2;
    let (fast, secs) = within(Duration::from_secs(1), started);
    outcome(
        worst_turn <= FRAC_PI_2 + 1e-12 && worst_speed == 0.0 && example && fast,
        format!(
            "max turn {:.6} rad, speed change {worst_speed:.1e}, 170° → ({:.1}°, {:.2}), {secs:.3} s",
            worst_turn,
            normalize_angle(ex.steer).to_degrees(),
            ex.speed
        ),
    )
}

fn random_costmap(rng: &mut ChaCha8Rng, n: usize) -> CostMap {
    let mut map = CostMap::new(GridGeometry::new(0.0, 0.0, 0.05, n, n));
    for c in map.costs.iter_mut() {
        *c = if rng.random_bool(0.5) { 0 } else { rng.random_range(1..=253) };
    }
    for _ in 0..rng.random_range(5..25) {
        let (c0, r0) = (rng.random_range(0..n), rng.random_range(0..n));
        let (w, h) = (rng.random_range(1..12), rng.random_range(1..12));
        for r in r0..(r0 + h).min(n) {
            for c in c0..(c0 + w).min(n) {
                map.set_cost(c, r, LETHAL);
            }
        }
    }
    map.set_cost(0, 0, 0);
    map.set_cost(n - 1, n - 1, 0);
    map
}

fn planner_optimality() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (start, goal) = (Cell::new(0, 0), Cell::new(63, 63));
    let mut problems = Vec::new();
    let mut worst_ratio: f64 = 1.0;
    let mut solvable = 0;
    for i in 0..50 {
        let map = random_costmap(&mut rng, 64);
        let best = dijkstra(&map, start, goal, PlannerParams::default().cost_scale);
        for w in [1.0, 1.2] {
            let params = PlannerParams {
                heuristic_weight: w,
                ..PlannerParams::default()
            };
            match (plan_cells(&map, start, &[goal], &params), best) {
                (Ok(p), Some(opt)) => {
                    if p.cells.iter().any(|c| map.is_lethal(c.col, c.row)) {
                        problems.push(format!("map {i}: lethal cell on path"));
                    }
                    if w == 1.0 && (p.cost - opt).abs() > 1e-9 {
                        problems.push(format!("map {i}: cost {} vs optimum {opt}", p.cost));
                    }
                    if p.cost > w * opt + 1e-9 {
                        problems.push(format!("map {i}: w={w} cost {} over bound", p.cost));
                    }
                    worst_ratio = worst_ratio.max(p.cost / opt);
                }
                (Err(_), None) => {}
                (Ok(_), None) => problems.push(format!("map {i}: path where none exists")),
                (Err(e), Some(_)) => problems.push(format!("map {i}: {e}")),
            }
        }
        solvable += best.is_some() as usize;
    }
    let (fast, secs) = within(Duration::from_secs(10), started);
    outcome(
        problems.is_empty() && solvable > 0 && fast,
        format!("{solvable}/50 solvable, worst w=1.2 ratio {worst_ratio:.4}, {secs:.2} s {problems:?}"),
    )
}

fn brute_force_outliers(c: &PointCloud, r: f64, k: usize) -> Vec<[f64; 3]> {
    c.points
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            let near = c
                .points
                .iter()
                .enumerate()
                .filter(|&(j, q)| j != i && (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>() <= r * r)
                .count();
            near >= k
        })
        .map(|(_, p)| *p)
        .collect()
}

fn floor_oracle(c: &PointCloud, band: f64) -> f64 {
    let mut ys: Vec<f64> = c.points.iter().map(|p| p[1]).collect();
    ys.sort_by(f64::total_cmp);
    let p5 = ys[((0.05 * ys.len() as f64).ceil() as usize).max(1) - 1];
    let sel: Vec<f64> = ys.into_iter().filter(|&y| y >= p5 && y <= p5 + band).collect();
    sel.iter().sum::<f64>() / sel.len() as f64
}

fn mapping_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut problems = Vec::new();
    for trial in 0..5 {
        let mut pts: Vec<[f64; 3]> = (0..1800)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..0.5), rng.random_range(0.0..1.0)])
            .collect();
        pts.extend((0..200).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]));
        let cloud = PointCloud::new(pts, 0.0);
        if reject_outliers(&cloud, 0.05, 3).points != brute_force_outliers(&cloud, 0.05, 3) {
            problems.push(format!("outliers differ in trial {trial}"));
        }
    }

    let g = GridGeometry::new(0.0, 0.0, 0.05, 100, 100);
    let mut grid = OccupancyGrid::new(g);
    let mut occupied = Vec::new();
    for _ in 0..40 {
        let (c, r) = (rng.random_range(0..100usize), rng.random_range(0..100usize));
        grid.cells[r * 100 + c] = CellState::Occupied;
        occupied.push((c as i64, r as i64));
    }
    let map = inflate(&grid, 0.3, 0.2);
    let mut mismatched = 0;
    for r in 0..100i64 {
        for c in 0..100i64 {
            let d2 = occupied.iter().map(|o| (o.0 - c).pow(2) + (o.1 - r).pow(2)).min().unwrap();
            let lethal = g.cell_size * (d2 as f64).sqrt() <= 0.3 + 1e-9;
            mismatched += (lethal != map.is_lethal(c as usize, r as usize)) as usize;
        }
    }
    if mismatched > 0 {
        problems.push(format!("{mismatched} cells differ from the distance transform"));
    }

    let mut worst_floor: f64 = 0.0;
    for _ in 0..20 {
        let floor = rng.random_range(-0.2..0.2);
        let mut pts: Vec<[f64; 3]> = (0..3000)
            .map(|_| [rng.random_range(0.0..3.0), floor + rng.random_range(-0.01..0.01), rng.random_range(0.0..3.0)])
            .collect();
        pts.extend((0..1000).map(|_| [rng.random_range(0.0..3.0), floor + rng.random_range(0.0..1.5), 0.0]));
        let cloud = PointCloud::new(pts, 0.0);
        worst_floor = worst_floor.max((instantaneous_floor(&cloud, 0.1).unwrap() - floor_oracle(&cloud, 0.1)).abs());
    }
    if worst_floor > 1e-12 {
        problems.push(format!("floor error {worst_floor:.2e}"));
    }
    let (fast, secs) = within(Duration::from_secs(10), started);
    outcome(problems.is_empty() && fast, format!("{secs:.2} s {problems:?}"))
}

fn controller_values() -> Outcome {
    let mut s = EmaFilterState::new(0.2);
    s.previous = Twist2::new(0.1, 0.0, 0.0);
    let ema = ema_step(&mut s, &Twist2::new(0.5, 0.0, 0.0)).vx;

    let gains = PidGains::default();
    let limits = RobotBody::default().limits;
    let facing_x = Pose2::new(0.0, 0.0, FRAC_PI_2);
    let first = pid_step(&facing_x, &Pose2::new(0.1, 0.0, FRAC_PI_2), &gains, &limits, 0.02, &mut PidMemory::default());
    let yaw = pid_step(&Pose2::default(), &Pose2::new(0.0, 0.0, 0.5), &gains, &limits, 0.02, &mut PidMemory::default());

    let scene = Scene::tally();
    let body = RobotBody::default();
    let target = scene.start_pose();
    let mut w = WorldState::from_scene(&scene, 1);
    w.pose = Pose2::new(target.x + 0.3, target.z - 0.4, target.yaw + 0.5);
    let mut mem = PidMemory::default();
    let mut cmd = StepCommands::default();
    let per_control = (0.02 / SIM_STEP).round() as usize;
    let mut settled_at = None;
    for k in 0..(15.0 / SIM_STEP) as usize {
        if k % per_control == 0 {
            let out = pid_step(&w.pose, &target, &gains, &limits, 0.02, &mut mem);
            if w.pose.distance(&target) <= 0.015 && normalize_angle(w.pose.yaw - target.yaw).abs() <= 0.03 {
                settled_at = Some(w.time);
                break;
            }
            cmd.base = out.twist;
        }
        w = step_world(&w, &cmd, &body, SIM_STEP);
    }
    let passed = ema == 0.42
        && (first.twist.vx - 0.15).abs() < 1e-12
        && yaw.twist.omega == 1.0
        && settled_at.is_some_and(|t| t < 15.0);
    outcome(
        passed,
        format!(
            "ema {ema}, first step {:.4} m/s, yaw {:.3} rad/s, settled at {:?} s",
            first.twist.vx, yaw.twist.omega, settled_at
        ),
    )
}

fn tally_marks() -> Outcome {
    let mut within_12mm = 0;
    let mut problems = Vec::new();
    let mut rows = Vec::new();
    for seed in SEEDS {
        let on_cfg = ScenarioConfig::new(ScenarioId::Tally, seed);
        let mut off_cfg = on_cfg.clone();
        off_cfg.params.loop_closure.enabled = false;
        let (on, off) = match (run(&on_cfg), run(&off_cfg)) {
            (Ok(a), Ok(b)) => (a, b),
            (a, b) => {
                problems.push(format!("seed {seed}: {:?} {:?}", a.err(), b.err()));
                continue;
            }
        };
        let (r_on, r_off) = (on.sim.scatter_radius.unwrap_or(f64::INFINITY), off.sim.scatter_radius.unwrap_or(0.0));
        within_12mm += (r_on <= 0.012) as usize;
        if r_off < 3.0 * r_on {
            problems.push(format!("seed {seed}: off {r_off:.4} < 3× on {r_on:.4}"));
        }
        for r in [&on, &off] {
            if r.wall.wall_time >= 60.0 {
                problems.push(format!("seed {seed}: {:.1} s run", r.wall.wall_time));
            }
        }
        rows.push(format!("{seed}:{:.1}/{:.1}mm", r_on * 1e3, r_off * 1e3));
    }
    let n = SEEDS.count();
    outcome(
        problems.is_empty() && within_12mm * 5 >= n * 4,
        format!("{within_12mm}/{n} seeds ≤ 12 mm; on/off {} {problems:?}", rows.join(" ")),
    )
}

fn wholebody() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut identity: f64 = 0.0;
    for _ in 0..1000 {
        let mut pose = || {
            Pose3::new(
                UnitQuaternion::from_euler_angles(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI)),
                Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            )
        };
        let (b0, e0, now) = (pose(), pose(), pose());
        let world = now.compose(&ee_hold_target(&b0, &e0, &now));
        let want = b0.compose(&e0);
        identity = identity.max(world.translation_distance(&want)).max(world.rotation.angle_to(&want.rotation));
    }

    let mut exact = ScenarioConfig::new(ScenarioId::Wholebody, 1);
    exact.params.wholebody.exact_feedback = true;
    exact.params.wholebody.latency_frames = 0;
    exact.params.ee_hold.smoothing = false;
    let exact_dev = run(&exact).ok().and_then(|r| r.sim.max_ee_deviation).unwrap_or(f64::INFINITY);

    let mut ok = 0;
    let mut devs = Vec::new();
    let mut slow = false;
    for seed in SEEDS {
        match run(&ScenarioConfig::new(ScenarioId::Wholebody, seed)) {
            Ok(r) => {
                let d = r.sim.max_ee_deviation.unwrap_or(f64::INFINITY);
                ok += (d <= 0.016 && r.sim.collisions == 0) as usize;
                slow |= r.wall.wall_time >= 30.0;
                devs.push(format!("{:.1}", d * 1e3));
            }
            Err(e) => devs.push(format!("error {e}")),
        }
    }
    let n = SEEDS.count();
    outcome(
        identity < 1e-9 && exact_dev < 1e-9 && ok * 5 >= n * 4 && !slow,
        format!(
            "identity {identity:.1e}, exact feedback {exact_dev:.1e} m, {ok}/{n} seeds ≤ 16 mm; max deviation mm [{}]",
            devs.join(" ")
        ),
    )
}

fn desk_scale_plan_time() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mut map = CostMap::new(GridGeometry::new(0.0, 0.0, 0.05, 200, 200));
        for _ in 0..30 {
            let (c0, r0) = (rng.random_range(10..190), rng.random_range(10..190));
            for r in r0..(r0 + 12).min(200) {
                for c in c0..(c0 + 12).min(200) {
                    map.set_cost(c, r, LETHAL);
                }
            }
        }
        let started = Instant::now();
        let _ = plan_cells(&map, Cell::new(2, 2), &[Cell::new(197, 197)], &PlannerParams::default());
        worst = worst.max(started.elapsed().as_secs_f64());
    }
    worst
}

fn obstacle_avoidance() -> Outcome {
    let mut problems = Vec::new();
    let mut worst_latency: f64 = 0.0;
    let mut worst_compute: f64 = 0.0;
    for seed in SEEDS {
        match run(&ScenarioConfig::new(ScenarioId::Obstacle, seed)) {
            Ok(r) => {
                let s = &r.sim;
                if s.replans < 1 {
                    problems.push(format!("seed {seed}: no replan"));
                }
                match s.replan_latency {
                    Some(l) if l <= 1.0 => worst_latency = worst_latency.max(l),
                    other => problems.push(format!("seed {seed}: latency {other:?}")),
                }
                if s.collisions > 0 {
                    problems.push(format!("seed {seed}: {} collisions", s.collisions));
                }
                if r.wall.wall_time >= 60.0 {
                    problems.push(format!("seed {seed}: {:.1} s run", r.wall.wall_time));
                }
                worst_compute = worst_compute.max(r.wall.max_plan_compute);
            }
            Err(e) => problems.push(format!("seed {seed}: {e}")),
        }
    }
    let desk = desk_scale_plan_time();
    outcome(
        problems.is_empty() && worst_compute <= 0.1 && desk <= 0.1,
        format!(
            "worst latency {worst_latency:.3} s, scenario plan compute {:.1} ms, 200×200 plan {:.1} ms {problems:?}",
            worst_compute * 1e3,
            desk * 1e3
        ),
    )
}

fn compliance() -> Outcome {
    let arm = TwoLinkArm::default();
    let kp = 20.0;
    let gains = StiffnessGains::uniform(2, kp, 2.0);
    let mut worst_rel: f64 = 0.0;
    for (q, ext) in [([0.2, 0.5], [1.0, 0.0]), ([-0.4, 1.0], [0.0, 0.5]), ([0.9, -0.6], [-0.8, 0.3])] {
        let r = JointState::at_rest(q.to_vec());
        let end = simulate_two_link(&arm, &r, &gains, ext, 8.0, 20).unwrap();
        for i in 0..2 {
            let want = ext[i] / kp;
            let got = end.q[i] - r.q[i];
            worst_rel = worst_rel.max((got - want).abs() / want.abs().max(0.01));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut gravity_exact = true;
    for _ in 0..1000 {
        let s = JointState {
            q: vec![rng.random_range(-PI..PI), rng.random_range(-PI..PI)],
            qd: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        };
        gravity_exact &= stiffness_torque(&s, &s, &gains, &arm).unwrap() == arm.torque(&s.q);
    }

    let lim = ShaperLimits::default();
    let dt = 0.005;
    let mut violations = 0;
    let mut unfinished = 0;
    for _ in 0..10_000 {
        let target = rng.random_range(-2.0..2.0);
        let mut s = JointState {
            q: vec![rng.random_range(-2.0..2.0)],
            qd: vec![rng.random_range(-lim.v_max..lim.v_max)],
        };
        let mut n = 0;
        while s.q[0] != target && n < 2000 {
            let next = shape_command(&s, &[target], &lim, dt).unwrap();
            violations += (next.qd[0].abs() > lim.v_max + 1e-12) as usize;
            violations += ((next.qd[0] - s.qd[0]).abs() > lim.a_max * dt + 1e-12) as usize;
            s = next;
            n += 1;
        }
        unfinished += (s.q[0] != target) as usize;
    }
    outcome(
        worst_rel <= 0.01 && gravity_exact && violations == 0 && unfinished == 0,
        format!(
            "deflection error {:.3}%, gravity exact {gravity_exact}, shaper violations {violations}, unfinished {unfinished}",
            worst_rel * 100.0
        ),
    )
}

fn lift_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut violations = 0;
    let mut hold_drift: f64 = 0.0;
    for _ in 0..200 {
        let mut s = LiftState::new(rng.random_range(LIFT_MIN..LIFT_MAX));
        for _ in 0..500 {
            let cmd = match rng.random_range(0..6) {
                0 => LiftCommand::Velocity(rng.random_range(-100.0..100.0)),
                1 => LiftCommand::Height(rng.random_range(-10.0..10.0)),
                2 => LiftCommand::Velocity(f64::NAN),
                3 => LiftCommand::Height(if rng.random_bool(0.5) { f64::INFINITY } else { f64::NEG_INFINITY }),
                4 => LiftCommand::Velocity(rng.random_range(-0.05..0.05)),
                _ => LiftCommand::Velocity(0.0),
            };
            let dt = if rng.random_bool(0.1) { rng.random_range(0.5..20.0) } else { 0.005 };
            let next = lift_step(&s, &cmd, dt);
            violations += !(LIFT_MIN..=LIFT_MAX).contains(&next.height) as usize;
            violations += (next.velocity.abs() > LIFT_SPEED_MAX) as usize;
            if cmd == LiftCommand::Velocity(0.0) {
                hold_drift = hold_drift.max((next.height - s.height).abs()).max(next.velocity.abs());
            }
            s = next;
        }
    }
    outcome(
        violations == 0 && hold_drift == 0.0,
        format!("bound violations {violations}, zero-command drift {hold_drift:e}"),
    )
}

fn determinism() -> Outcome {
    let mut differing = Vec::new();
    for id in ScenarioId::ALL {
        let mut cfg = ScenarioConfig::new(id, 42);
        cfg.params.tally.loops = 2;
        cfg.params.freeplay.duration = 5.0;
        let a = run(&cfg).map(|r| r.sim_json());
        let b = run(&cfg).map(|r| r.sim_json());
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => differing.push(id.name()),
        }
    }
    outcome(differing.is_empty(), format!("differing scenarios {differing:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("swerve kinematics", swerve_kinematics),
        ("shortest turn", shortest_turn),
        ("planner optimality", planner_optimality),
        ("mapping oracles", mapping_oracles),
        ("controller values", controller_values),
        ("tally marks", tally_marks),
        ("whole-body hold", wholebody),
        ("obstacle avoidance", obstacle_avoidance),
        ("compliance law", compliance),
        ("lift contract", lift_contract),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let o = check();
        failed += !o.passed as usize;
        println!(
            "{} {name} ({:.1} s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
