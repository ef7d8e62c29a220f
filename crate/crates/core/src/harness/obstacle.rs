//! Drive to GOAL while a pedestrian crosses the route.

use crate::bus::Bus;

use super::navigation::{build_static_map, Navigator};
use super::runner::Runner;
use super::{new_report, plan_timing, HarnessError, MetricsReport, ScenarioConfig};

pub fn run_obstacle(cfg: &ScenarioConfig, bus: &Bus) -> Result<MetricsReport, HarnessError> {
    let goal = cfg.point("GOAL")?;
    let p = cfg.params.clone();
    let rates = p.rates;
    let (map, floor) = build_static_map(&cfg.scene, &p, cfg.seed);
    let mut runner = Runner::new(cfg.scene.clone(), p.clone(), cfg.seed, bus.clone());
    runner.set_realtime(cfg.realtime);
    let mut nav = Navigator::new(map, floor, p.clone(), bus.clone());
    if let Err(e) = nav.set_goal(goal, &runner.estimate(), 0.0) {
        log::info!("no initial plan: {e}");
    }

    let mut reached = false;
    let mut halted_since: Option<f64> = None;
    let mut halt_reason = None;
    while runner.time() < p.obstacle.timeout {
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
        let speed = runner.commands.base.linear_speed();
        match nav.control(&runner.estimate(), speed, 1.0 / rates.control) {
            Some(out) if out.done => {
                runner.halt();
                reached = true;
                break;
            }
            Some(out) => {
                halted_since = None;
                runner.set_base(out.twist);
            }
            None => {
                runner.halt();
                let since = *halted_since.get_or_insert(t);
                if t - since >= p.obstacle.halt_hold {
                    halt_reason = Some(
                        nav.failure
                            .as_ref()
                            .map_or_else(|| "no path".to_string(), |e| e.to_string()),
                    );
                    break;
                }
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
    s.replan_latencies = nav.stats.latencies.clone();
    s.lethal_plan_publications = nav.stats.lethal_publications;
    s.goal_reached = Some(reached);
    s.halt_reason = halt_reason;
    s.final_odometry_error = runner.odometry_error();
    report.success = s.collisions == 0 && (reached || s.halt_reason.is_some());
    (report.wall.max_plan_compute, report.wall.mean_plan_compute) = plan_timing(&nav.stats.compute);
    Ok(report)
}
