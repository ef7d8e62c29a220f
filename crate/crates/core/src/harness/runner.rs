//! Multirate simulation loop shared by the scenarios.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use crate::base_control::{ema_step, EmaFilterState};
use crate::bus::topics::{EeStateMsg, LiftStateMsg, PoseMsg, TwistMsg};
use crate::bus::Bus;
use crate::frames::{Pose2, Pose3, Twist2};
use crate::mapping::{PointCloud, PoseQuality};
use crate::sim::{
    counter_rng, loop_closure_update, odometry_step, render_camera, step_world, OdomState, Scene, StepCommands,
    Stream, WorldState, SIM_STEP,
};

use super::config::Params;

const POSE_HISTORY: usize = 32;

/// A published localizer sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub estimate: Pose2,
    pub truth: Pose2,
    pub quality: PoseQuality,
}

/// Number of ticks of a `rate` Hz task completed after `steps` sim steps.
pub fn ticks(steps: u64, rate: f64) -> u64 {
    ((steps as f64) * rate * SIM_STEP + 1e-9).floor() as u64
}

pub fn microseconds(t: f64) -> u64 {
    (t * 1e6).round().max(0.0) as u64
}

pub struct Runner {
    pub scene: Scene,
    pub params: Params,
    pub world: WorldState,
    pub odom: OdomState,
    pub bus: Bus,
    pub commands: StepCommands,
    /// Publish filtered base commands on `cmd_twist`.
    pub echo_commands: bool,
    ema: EmaFilterState,
    poses: VecDeque<PoseSample>,
    cloud_counter: u64,
    realtime: Option<(Instant, f64)>,
}

impl Runner {
    pub fn new(scene: Scene, params: Params, seed: u64, bus: Bus) -> Self {
        let world = WorldState::from_scene(&scene, seed);
        let odom = OdomState::new(world.pose);
        let ema = EmaFilterState::new(params.ema_alpha);
        let mut poses = VecDeque::with_capacity(POSE_HISTORY);
        poses.push_back(PoseSample {
            t: 0.0,
            estimate: odom.estimate,
            truth: odom.truth,
            quality: odom.quality,
        });
        Self {
            scene,
            params,
            world,
            odom,
            bus,
            commands: StepCommands::default(),
            echo_commands: true,
            ema,
            poses,
            cloud_counter: 0,
            realtime: None,
        }
    }

    /// Paces simulated time against the wall clock from now on.
    pub fn set_realtime(&mut self, on: bool) {
        self.realtime = on.then(|| (Instant::now(), self.world.time));
    }

    pub fn time(&self) -> f64 {
        self.world.time
    }

    /// True if a `rate` Hz task is due after the step just taken.
    pub fn due(&self, rate: f64) -> bool {
        let k = self.world.steps;
        k > 0 && ticks(k, rate) > ticks(k - 1, rate)
    }

    /// Latest localizer sample, as cached by a consumer.
    pub fn latest(&self) -> PoseSample {
        *self.poses.back().expect("pose history is never empty")
    }

    pub fn estimate(&self) -> Pose2 {
        self.latest().estimate
    }

    /// Sample published `frames` messages before the latest one.
    pub fn delayed(&self, frames: usize) -> PoseSample {
        let n = self.poses.len();
        self.poses[n - 1 - frames.min(n - 1)]
    }

    /// Filters and holds a base twist until the next control tick.
    pub fn set_base(&mut self, twist: Twist2) {
        self.commands.base = ema_step(&mut self.ema, &twist);
        if self.echo_commands && self.bus.wanted("cmd_twist") {
            let _ = self
                .bus
                .publish_json("cmd_twist", microseconds(self.time()), &TwistMsg::from(self.commands.base));
        }
    }

    /// Zero twist, bypassing the filter.
    pub fn halt(&mut self) {
        self.ema.reset();
        self.set_base(Twist2::ZERO);
    }

    pub fn step(&mut self) {
        let prev = self.world.pose;
        self.world = step_world(&self.world, &self.commands, &self.params.body, SIM_STEP);
        self.commands.ee = None;
        let t = self.world.time;
        let occluded = self.scene.occluded(t);
        let mut rng = counter_rng(self.world.seed, Stream::Odometry, self.world.steps);
        self.odom = odometry_step(
            &self.odom,
            &prev,
            &self.world.pose,
            &self.params.odometry,
            occluded,
            self.params.loop_closure.keyframe_spacing,
            &mut rng,
        );
        let lc = self.params.loop_closure;
        if lc.enabled && self.due(lc.rate) {
            self.odom = loop_closure_update(&self.odom, lc.keyframe_radius, lc.residual, lc.recent_exclusion);
        }
        if self.due(self.params.rates.pose) {
            let sample = PoseSample {
                t,
                estimate: self.odom.estimate,
                truth: self.world.pose,
                quality: self.odom.quality,
            };
            if self.poses.len() == POSE_HISTORY {
                self.poses.pop_front();
            }
            self.poses.push_back(sample);
            self.publish_pose(&sample);
        }
        if self.due(self.params.rates.state) {
            self.publish_state();
        }
        if let Some((start, t0)) = self.realtime {
            let ahead = (t - t0) - start.elapsed().as_secs_f64();
            if ahead > 0.001 {
                std::thread::sleep(Duration::from_secs_f64(ahead));
            }
        }
    }

    fn publish_pose(&self, s: &PoseSample) {
        let ts = microseconds(s.t);
        if self.bus.wanted("pose") {
            let _ = self.bus.publish_json("pose", ts, &PoseMsg::new(s.t, s.estimate, s.quality));
        }
        if self.bus.wanted("true_pose") {
            let _ = self.bus.publish_json("true_pose", ts, &PoseMsg::new(s.t, s.truth, PoseQuality::Good));
        }
    }

    fn publish_state(&self) {
        let t = self.time();
        let ts = microseconds(t);
        if self.bus.wanted("lift_state") {
            let msg = LiftStateMsg {
                t,
                height: self.world.lift.height,
                velocity: self.world.lift.velocity,
            };
            let _ = self.bus.publish_json("lift_state", ts, &msg);
        }
        if self.bus.wanted("ee_state") {
            let msg = EeStateMsg {
                t,
                world: self.world.ee_world(),
                base: self.world.ee_base,
            };
            let _ = self.bus.publish_json("ee_state", ts, &msg);
        }
    }

    /// Renders the depth camera and publishes the cloud. Returns the camera
    /// pose implied by the current estimate together with the sensor-frame
    /// cloud.
    pub fn capture_cloud(&mut self) -> (Pose3, PointCloud) {
        let occluded = self.scene.occluded(self.time());
        let (_, cloud) = render_camera(&self.world, &self.scene.camera, occluded, self.cloud_counter);
        self.cloud_counter += 1;
        if self.bus.wanted("cloud") {
            let _ = self.bus.publish("cloud", microseconds(cloud.timestamp), cloud.encode());
        }
        let pose = self.scene.camera.world_pose(&self.estimate(), self.world.lift.height);
        (pose, cloud)
    }

    /// Current odometry estimate minus truth as `[dx, dz, dψ]`.
    pub fn odometry_error(&self) -> [f64; 3] {
        let e = self.odom.error();
        [e.dx, e.dz, e.dyaw]
    }
}
