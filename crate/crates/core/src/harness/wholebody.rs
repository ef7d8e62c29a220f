//! Lateral base move with the end effector held fixed in the world.

use crate::bus::topics::EeCmdMsg;
use crate::bus::Bus;
use crate::frames::{Pose3, Twist2};
use crate::manip::EeHoldState;

use super::runner::{microseconds, PoseSample, Runner};
use super::{new_report, HarnessError, MetricsReport, ScenarioConfig};

fn feedback(sample: &PoseSample, exact: bool) -> Pose3 {
    Pose3::from_pose2(if exact { sample.truth } else { sample.estimate }, 0.0)
}

pub fn run_wholebody(cfg: &ScenarioConfig, bus: &Bus) -> Result<MetricsReport, HarnessError> {
    let p = cfg.params.clone();
    let wb = p.wholebody;
    let mut runner = Runner::new(cfg.scene.clone(), p.clone(), cfg.seed, bus.clone());
    runner.set_realtime(cfg.realtime);
    runner.world.ee_base = Pose3::from_translation(wb.ee[0], wb.ee[1], wb.ee[2]);

    let start = runner.latest();
    let mut hold = EeHoldState::capture(feedback(&start, wb.exact_feedback), runner.world.ee_base, p.ee_hold);
    let world_ee0 = runner.world.ee_world().translation;
    let hold_dt = 1.0 / p.rates.ee_hold;
    let travel = Twist2::new(0.0, wb.speed, 0.0);
    let limit = wb.distance / wb.speed.max(1e-6) * 4.0 + 10.0;

    let mut moving = true;
    let mut stop_time = f64::INFINITY;
    let mut max_dev: f64 = 0.0;
    while runner.time() < stop_time + wb.settle && runner.time() < limit + wb.settle {
        runner.step();
        if runner.due(p.rates.control) {
            if moving && runner.estimate().distance(&start.estimate) >= wb.distance {
                moving = false;
                stop_time = runner.time();
            }
            runner.set_base(if moving { travel } else { Twist2::ZERO });
        }
        if runner.due(p.rates.ee_hold) {
            let fb = feedback(&runner.delayed(wb.latency_frames), wb.exact_feedback);
            let cmd = hold.step(&fb, hold_dt);
            runner.commands.ee = Some(cmd);
            if runner.bus.wanted("cmd_ee") {
                let _ = runner
                    .bus
                    .publish_json("cmd_ee", microseconds(runner.time()), &EeCmdMsg { pose: cmd });
            }
            let world_ee = runner.world.base_pose3().compose(&cmd).translation;
            max_dev = max_dev.max((world_ee - world_ee0).norm());
        }
    }

    let mut report = new_report(cfg);
    let s = &mut report.sim;
    s.sim_time = runner.time();
    s.collisions = runner.world.collisions;
    s.closures = runner.odom.closures;
    s.max_ee_deviation = Some(max_dev);
    s.final_odometry_error = runner.odometry_error();
    report.success = !moving && s.collisions == 0 && max_dev <= wb.tolerance;
    Ok(report)
}
