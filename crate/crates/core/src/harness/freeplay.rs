//! Interactive session: teleop commands and goals arrive over the bus.

use std::time::Duration;

use crate::bus::topics::{EeCmdMsg, GoalReply, GoalRequest, LiftCmdMsg, ScenarioReply, ScenarioRequest, TwistMsg};
use crate::bus::{Bus, PendingRequest, Subscription};
use crate::frames::{Pose2, Twist2};

use super::navigation::{build_static_map, Navigator};
use super::runner::Runner;
use super::{new_report, plan_timing, HarnessError, MetricsReport, ScenarioConfig};

struct Session {
    running: bool,
    stopped: bool,
}

fn status(cfg: &ScenarioConfig, runner: &Runner, session: &Session) -> ScenarioReply {
    ScenarioReply {
        scenario: cfg.scenario.name().to_string(),
        t: runner.time(),
        running: session.running,
    }
}

fn parse<T: serde::de::DeserializeOwned>(req: &PendingRequest) -> Option<T> {
    serde_json::from_slice(&req.envelope.payload).ok()
}

pub fn run_freeplay(cfg: &ScenarioConfig, bus: &Bus) -> Result<MetricsReport, HarnessError> {
    let p = cfg.params.clone();
    let rates = p.rates;
    let fp = p.freeplay;
    let (map, floor) = build_static_map(&cfg.scene, &p, cfg.seed);
    let mut runner = Runner::new(cfg.scene.clone(), p.clone(), cfg.seed, bus.clone());
    runner.echo_commands = false;
    runner.set_realtime(cfg.realtime);
    let mut nav = Navigator::new(map, floor, p.clone(), bus.clone());

    let goals = bus.serve("goal")?;
    let control = bus.serve("scenario")?;
    let twists: Subscription = bus.subscribe("cmd_twist")?;
    let lifts = bus.subscribe("cmd_lift")?;
    let ees = bus.subscribe("cmd_ee")?;

    let mut session = Session {
        running: true,
        stopped: false,
    };
    let mut teleop: Option<(f64, Twist2)> = None;
    let mut reached = None;
    while !session.stopped && (fp.duration <= 0.0 || runner.time() < fp.duration) {
        while let Some(req) = control.try_next() {
            match parse::<ScenarioRequest>(&req) {
                Some(cmd) => {
                    match cmd {
                        ScenarioRequest::Status => {}
                        ScenarioRequest::Pause => session.running = false,
                        ScenarioRequest::Resume => session.running = true,
                        ScenarioRequest::Stop => {
                            session.running = false;
                            session.stopped = true;
                        }
                    }
                    req.reply_json(&status(cfg, &runner, &session));
                }
                None => req.fail("malformed scenario request"),
            }
        }
        while let Some(req) = goals.try_next() {
            let Some(g) = parse::<GoalRequest>(&req) else {
                req.fail("malformed goal request");
                continue;
            };
            let reply = match nav.set_goal(Pose2::new(g.x, g.z, g.yaw), &runner.estimate(), runner.time()) {
                Ok(()) => {
                    teleop = None;
                    reached = Some(false);
                    GoalReply {
                        accepted: true,
                        reason: None,
                    }
                }
                Err(e) => {
                    nav.clear_goal();
                    GoalReply {
                        accepted: false,
                        reason: Some(e.to_string()),
                    }
                }
            };
            req.reply_json(&reply);
        }
        if !session.running {
            if !session.stopped {
                std::thread::sleep(Duration::from_millis(5));
            }
            continue;
        }

        for env in twists.drain() {
            if let Ok(m) = serde_json::from_slice::<TwistMsg>(&env.payload) {
                let tw = Twist2::from(m);
                if !tw.is_zero() && nav.goal.is_some() {
                    nav.clear_goal();
                }
                teleop = Some((runner.time(), tw));
            }
        }
        if let Some(env) = lifts.drain().pop() {
            if let Ok(cmd) = serde_json::from_slice::<LiftCmdMsg>(&env.payload) {
                runner.commands.lift = cmd;
            }
        }
        if let Some(env) = ees.drain().pop() {
            if let Ok(m) = serde_json::from_slice::<EeCmdMsg>(&env.payload) {
                runner.commands.ee = Some(m.pose);
            }
        }

        runner.step();
        let t = runner.time();
        if runner.due(rates.fusion) {
            nav.fusion_tick(&runner.estimate(), t);
        }
        if runner.due(rates.cloud) {
            let (cam_pose, cloud) = runner.capture_cloud();
            nav.observe(&cloud, &cam_pose, runner.latest().quality);
        }
        if !runner.due(rates.control) {
            continue;
        }
        if nav.goal.is_some() {
            let speed = runner.commands.base.linear_speed();
            match nav.control(&runner.estimate(), speed, 1.0 / rates.control) {
                Some(out) if out.done => {
                    nav.clear_goal();
                    reached = Some(true);
                    runner.halt();
                }
                Some(out) => runner.set_base(out.twist),
                None => runner.halt(),
            }
        } else {
            match teleop {
                Some((at, tw)) if t - at <= fp.teleop_timeout => runner.set_base(tw),
                _ => runner.halt(),
            }
        }
    }

    let mut report = new_report(cfg);
    let s = &mut report.sim;
    s.sim_time = runner.time();
    s.collisions = runner.world.collisions;
    s.closures = runner.odom.closures;
    s.plans = nav.stats.plans;
    s.replans = nav.stats.replans;
    s.replan_latency = nav.stats.latencies.iter().cloned().reduce(f64::max);
    s.lethal_plan_publications = nav.stats.lethal_publications;
    s.goal_reached = reached;
    s.final_odometry_error = runner.odometry_error();
    report.success = s.collisions == 0;
    (report.wall.max_plan_compute, report.wall.mean_plan_compute) = plan_timing(&nav.stats.compute);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ScenarioId;
    use crate::sim::SIM_STEP;

    fn wait_for_service(bus: &Bus) {
        for _ in 0..500 {
            let r: Result<ScenarioReply, _> =
                bus.request_json("scenario", 0, &ScenarioRequest::Status, Duration::from_secs(1));
            if r.is_ok() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        panic!("scenario service never came up");
    }

    #[test]
    fn teleop_drive_and_stop() {
        let bus = Bus::new();
        let mut cfg = ScenarioConfig::new(ScenarioId::Freeplay, 1);
        cfg.params.freeplay.duration = 0.0;
        let handle = {
            let bus = bus.clone();
            std::thread::spawn(move || run_freeplay(&cfg, &bus))
        };
        wait_for_service(&bus);
        let poses = bus.subscribe("true_pose").unwrap();
        let pause: ScenarioReply = bus
            .request_json("scenario", 0, &ScenarioRequest::Pause, Duration::from_secs(1))
            .unwrap();
        assert!(!pause.running);
        for _ in 0..10 {
            bus.publish_json("cmd_twist", 0, &TwistMsg::from(Twist2::new(0.25, 0.0, 0.0)))
                .unwrap();
        }
        let _: ScenarioReply = bus
            .request_json("scenario", 0, &ScenarioRequest::Resume, Duration::from_secs(1))
            .unwrap();
        let mut moved = 0.0;
        for _ in 0..500 {
            if let Some(env) = poses.recv_timeout(Duration::from_millis(10)) {
                let m: crate::bus::topics::PoseMsg = serde_json::from_slice(&env.payload).unwrap();
                moved = m.z;
            }
            if moved > 0.02 {
                break;
            }
        }
        assert!(moved > 0.02, "teleop twist did not move the base");
        let stop: ScenarioReply = bus
            .request_json("scenario", 0, &ScenarioRequest::Stop, Duration::from_secs(1))
            .unwrap();
        assert!(!stop.running);
        let r = handle.join().unwrap().unwrap();
        assert!(r.success);
        assert!(r.sim.sim_time > SIM_STEP);
    }

    #[test]
    fn goal_service_replies() {
        let bus = Bus::new();
        let mut cfg = ScenarioConfig::new(ScenarioId::Freeplay, 1);
        cfg.params.freeplay.duration = 0.0;
        let handle = {
            let bus = bus.clone();
            std::thread::spawn(move || run_freeplay(&cfg, &bus))
        };
        wait_for_service(&bus);
        let ok: GoalReply = bus
            .request_json("goal", 0, &GoalRequest { x: 0.0, z: 5.0, yaw: 0.0 }, Duration::from_secs(1))
            .unwrap();
        assert!(ok.accepted, "{ok:?}");
        let inside_wall: GoalReply = bus
            .request_json("goal", 0, &GoalRequest { x: 2.0, z: 2.6, yaw: 0.0 }, Duration::from_secs(1))
            .unwrap();
        assert!(!inside_wall.accepted);
        assert!(inside_wall.reason.is_some());
        let _: ScenarioReply = bus
            .request_json("scenario", 0, &ScenarioRequest::Stop, Duration::from_secs(1))
            .unwrap();
        assert!(handle.join().unwrap().unwrap().success);
    }
}
