//! Repeated HOME → P1 → P2 → P3 → HOME loops ending in a two-stage dock and
//! a mark with the end effector.

use crate::base_control::{DockStage, Docker};
use crate::bus::Bus;
use crate::frames::{normalize_angle, Pose2, Pose3};

use super::navigation::{build_static_map, Navigator};
use super::runner::Runner;
use super::{new_report, plan_timing, HarnessError, LoopMetrics, MetricsReport, ScenarioConfig};

pub const ROUTE: [&str; 4] = ["P1", "P2", "P3", "HOME"];

enum Outcome {
    Done,
    Failed(String),
}

fn drive_leg(runner: &mut Runner, nav: &mut Navigator, target: Pose2, timeout: f64) -> Outcome {
    let control = runner.params.rates.control;
    let est = runner.estimate();
    if let Err(e) = nav.set_goal(target, &est, runner.time()) {
        runner.halt();
        return Outcome::Failed(format!("planning to ({:.2}, {:.2}): {e}", target.x, target.z));
    }
    let deadline = runner.time() + timeout;
    let hits = runner.world.collisions;
    while runner.time() < deadline {
        runner.step();
        if runner.world.collisions > hits {
            runner.halt();
            return Outcome::Failed("collision".into());
        }
        if runner.due(control) {
            let est = runner.estimate();
            let speed = runner.commands.base.linear_speed();
            match nav.control(&est, speed, 1.0 / control) {
                Some(out) if out.done => return Outcome::Done,
                Some(out) => runner.set_base(out.twist),
                None => {
                    runner.halt();
                    return Outcome::Failed("lost path".into());
                }
            }
        }
    }
    runner.halt();
    Outcome::Failed("leg timed out".into())
}

fn dock(runner: &mut Runner, home: Pose2) -> Outcome {
    let p = runner.params.clone();
    let mut docker = Docker::new(home, p.dock);
    let dt = 1.0 / p.rates.control;
    let hits = runner.world.collisions;
    loop {
        runner.step();
        if runner.world.collisions > hits {
            runner.halt();
            return Outcome::Failed("collision while docking".into());
        }
        if !runner.due(p.rates.control) {
            continue;
        }
        match docker.step(&runner.estimate(), &p.pid, &p.body.limits, dt) {
            Ok(cmd) if cmd.stage == DockStage::Done => {
                runner.halt();
                return Outcome::Done;
            }
            Ok(cmd) => runner.set_base(cmd.twist),
            Err(e) => {
                runner.halt();
                return Outcome::Failed(e.to_string());
            }
        }
    }
}

fn ground(p: &Pose3) -> [f64; 2] {
    [p.translation.x, p.translation.z]
}

pub fn run_tally(cfg: &ScenarioConfig, bus: &Bus) -> Result<MetricsReport, HarnessError> {
    let home = cfg.point("HOME")?;
    let route: Vec<Pose2> = ROUTE.iter().map(|n| cfg.point(n)).collect::<Result<_, _>>()?;
    let p = cfg.params.clone();
    let (map, floor) = build_static_map(&cfg.scene, &p, cfg.seed);
    let mut runner = Runner::new(cfg.scene.clone(), p.clone(), cfg.seed, bus.clone());
    runner.set_realtime(cfg.realtime);
    let mut nav = Navigator::new(map, floor, p.clone(), bus.clone());

    let carry = runner.world.ee_base;
    let mark_pose = Pose3::from_translation(p.tally.mark[0], p.tally.mark[1], p.tally.mark[2]);
    let ideal_mark = ground(&Pose3::from_pose2(home, 0.0).compose(&mark_pose));

    let mut report = new_report(cfg);
    for index in 0..p.tally.loops {
        let mut failure = None;
        for target in &route {
            if let Outcome::Failed(why) = drive_leg(&mut runner, &mut nav, *target, p.tally.leg_timeout) {
                failure = Some(why);
                break;
            }
        }
        if failure.is_none() {
            if let Outcome::Failed(why) = dock(&mut runner, home) {
                failure = Some(why);
            }
        }
        let truth = runner.world.pose;
        let mut lm = LoopMetrics {
            index,
            completed: failure.is_none(),
            dx: truth.x - home.x,
            dz: truth.z - home.z,
            yaw_error: normalize_angle(truth.yaw - home.yaw),
            odometry_error: runner.odometry_error(),
            sim_time: runner.time(),
            error: failure,
            ..Default::default()
        };
        if lm.completed {
            runner.commands.ee = Some(mark_pose);
            runner.step();
            let mark = ground(&runner.world.ee_world());
            lm.mark = mark;
            lm.mark_deviation = (mark[0] - ideal_mark[0]).hypot(mark[1] - ideal_mark[1]);
            let dwell = runner.time() + p.tally.mark_dwell;
            while runner.time() < dwell {
                runner.step();
            }
            runner.commands.ee = Some(carry);
        }
        log::debug!(
            "loop {index}: completed {} mark deviation {:.4} m",
            lm.completed,
            lm.mark_deviation
        );
        report.sim.loops.push(lm);
    }

    let s = &mut report.sim;
    s.sim_time = runner.time();
    s.collisions = runner.world.collisions;
    s.closures = runner.odom.closures;
    s.plans = nav.stats.plans;
    s.replans = nav.stats.replans;
    s.lethal_plan_publications = nav.stats.lethal_publications;
    s.final_odometry_error = runner.odometry_error();
    s.scatter_radius = s
        .loops
        .iter()
        .filter(|l| l.completed)
        .map(|l| l.dx.hypot(l.dz))
        .reduce(f64::max);
    report.success = s.loops.iter().all(|l| l.completed) && s.collisions == 0;
    (report.wall.max_plan_compute, report.wall.mean_plan_compute) = plan_timing(&nav.stats.compute);
    Ok(report)
}
