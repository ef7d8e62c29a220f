//! Deterministic 2.5D world: kinematic swerve base, lift, end effector,
//! scripted pedestrians, depth camera and drifting odometry.

pub mod camera;
pub mod odometry;
pub mod scene;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frames::{Pose2, Pose3, Twist2};
use crate::manip::{lift_step, LiftCommand, LiftState};
use crate::mapping::PointCloud;
use crate::swerve::{
    forward_kinematics, inverse_kinematics, optimize_module, slew_modules, ChassisGeometry, ModuleState,
    VelocityLimits, MODULE_COUNT,
};

pub use camera::{render_depth, CameraModel, DepthScene};
pub use odometry::{loop_closure_update, odometry_step, LoopClosureParams, OdomState, OdometryNoise, PoseError};
pub use scene::{BoxObstacle, Bounds, Scene, SceneError, WalkerScript};

pub const SIM_STEP: f64 = 0.005;

/// Independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Odometry = 1,
    Camera = 2,
    Mapping = 3,
}

/// Generator for draw number `counter` of `stream`: a pure function of
/// `(seed, stream, counter)`, so results never depend on call order.
pub fn counter_rng(seed: u64, stream: Stream, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.set_word_pos((counter as u128) << 24);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotBody {
    pub radius: f64,
    pub geometry: ChassisGeometry,
    pub limits: VelocityLimits,
}

impl Default for RobotBody {
    fn default() -> Self {
        Self {
            radius: 0.3,
            geometry: ChassisGeometry::default(),
            limits: VelocityLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub time: f64,
    pub pose: Pose2,
    pub modules: [ModuleState; MODULE_COUNT],
    /// Chassis twist realized in the last step.
    pub twist: Twist2,
    pub lift: LiftState,
    /// End effector relative to the base frame.
    pub ee_base: Pose3,
    pub boxes: Vec<BoxObstacle>,
    pub walkers: Vec<WalkerScript>,
    pub collided: bool,
    pub collisions: u32,
    pub seed: u64,
    pub steps: u64,
}

impl WorldState {
    pub fn from_scene(scene: &Scene, seed: u64) -> Self {
        Self {
            time: 0.0,
            pose: scene.start_pose(),
            modules: [ModuleState::new(0.0, 0.0); MODULE_COUNT],
            twist: Twist2::ZERO,
            lift: LiftState::new(scene.lift_height),
            ee_base: Pose3::from_translation(0.0, scene.lift_height + 0.2, 0.35),
            boxes: scene.boxes.clone(),
            walkers: scene.walkers.clone(),
            collided: false,
            collisions: 0,
            seed,
            steps: 0,
        }
    }

    pub fn walker_positions(&self, t: f64) -> Vec<[f64; 2]> {
        self.walkers.iter().map(|w| w.position(t)).collect()
    }

    pub fn base_pose3(&self) -> Pose3 {
        Pose3::from_pose2(self.pose, 0.0)
    }

    pub fn ee_world(&self) -> Pose3 {
        self.base_pose3().compose(&self.ee_base)
    }

    pub fn depth_scene(&self) -> DepthScene<'_> {
        DepthScene {
            boxes: &self.boxes,
            walkers: self.walkers.iter().map(|w| (w, w.position(self.time))).collect(),
        }
    }
}

/// Signed clearance between the robot disc at `(x, z)` and the nearest
/// obstacle; `≤ 0` means contact.
pub fn clearance(x: f64, z: f64, radius: f64, boxes: &[BoxObstacle], walkers: &[(f64, [f64; 2])]) -> f64 {
    let b = boxes.iter().map(|b| b.distance(x, z)).fold(f64::INFINITY, f64::min);
    let w = walkers
        .iter()
        .map(|(r, p)| (p[0] - x).hypot(p[1] - z) - r)
        .fold(f64::INFINITY, f64::min);
    b.min(w) - radius
}

fn advance(pose: &Pose2, twist: &Twist2, dt: f64) -> Pose2 {
    let mid = Pose2::new(pose.x, pose.z, pose.yaw + 0.5 * twist.omega * dt);
    let (wx, wz) = mid.robot_to_world(twist.vx * dt, twist.vy * dt);
    Pose2::new(pose.x + wx, pose.z + wz, pose.yaw + twist.omega * dt)
}

fn lerp_pose(a: &Pose2, b: &Pose2, s: f64) -> Pose2 {
    let dyaw = crate::frames::normalize_angle(b.yaw - a.yaw);
    Pose2::new(a.x + s * (b.x - a.x), a.z + s * (b.z - a.z), a.yaw + s * dyaw)
}

/// Commands applied during one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepCommands {
    pub base: Twist2,
    pub lift: LiftCommand,
    /// Base-frame EE target; `None` holds the current pose.
    pub ee: Option<Pose3>,
}

/// Pure world step. Base twist goes through module IK, shortest-turn
/// optimization against the actual steering, steer-rate and drive-accel
/// slewing and FK before integration. Contact stops the base at the point of
/// first touch.
pub fn step_world(w: &WorldState, cmd: &StepCommands, body: &RobotBody, dt: f64) -> WorldState {
    assert!(dt > 0.0 && dt <= 0.05, "step size out of range");
    let mut next = w.clone();
    next.time = w.time + dt;
    next.steps = w.steps + 1;

    let steer: [f64; MODULE_COUNT] = std::array::from_fn(|i| w.modules[i].steer);
    let raw = inverse_kinematics(&cmd.base, &body.geometry, &steer);
    let setpoint: [ModuleState; MODULE_COUNT] = std::array::from_fn(|i| optimize_module(steer[i], raw[i]));
    let modules = slew_modules(&w.modules, &setpoint, &body.limits, dt);
    let twist = forward_kinematics(&modules, &body.geometry);
    let target = advance(&w.pose, &twist, dt);

    let walkers: Vec<(f64, [f64; 2])> = w
        .walkers
        .iter()
        .map(|s| (s.radius, s.position(next.time)))
        .collect();
    let gap = |p: &Pose2| clearance(p.x, p.z, body.radius, &w.boxes, &walkers);

    next.modules = modules;
    next.twist = twist;
    next.pose = target;
    next.collided = false;
    if gap(&target) <= 0.0 {
        next.collided = true;
        next.twist = Twist2::ZERO;
        for m in next.modules.iter_mut() {
            m.speed = 0.0;
        }
        if gap(&w.pose) <= 0.0 {
            next.pose = w.pose;
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if gap(&lerp_pose(&w.pose, &target, mid)) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            next.pose = lerp_pose(&w.pose, &target, hi);
        }
    }
    if next.collided && !w.collided {
        next.collisions += 1;
    }

    next.lift = lift_step(&w.lift, &cmd.lift, dt);
    if let Some(ee) = cmd.ee {
        next.ee_base = ee;
    }
    next
}

/// Renders the camera for the current state using draw `counter`.
pub fn render_camera(w: &WorldState, cam: &CameraModel, occluded: bool, counter: u64) -> (Pose3, PointCloud) {
    let pose = cam.world_pose(&w.pose, w.lift.height);
    let mut rng = counter_rng(w.seed, Stream::Camera, counter);
    let cloud = render_depth(cam, &pose, &w.depth_scene(), occluded, w.time, &mut rng);
    (pose, cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn world() -> WorldState {
        WorldState::from_scene(&Scene::wholebody(), 7)
    }

    #[test]
    fn idle_step() {
        let w = world();
        let n = step_world(&w, &StepCommands::default(), &RobotBody::default(), SIM_STEP);
        assert_eq!(n.pose, w.pose);
        assert!((n.time - SIM_STEP).abs() < 1e-15);
        assert_eq!(n.lift, w.lift);
    }

    #[test]
    fn constant_drive() {
        let body = RobotBody {
            limits: VelocityLimits {
                steer_rate_max: 100.0,
                drive_accel_max: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut w = world();
        let cmd = StepCommands {
            base: Twist2::new(0.25, 0.0, 0.0),
            ..Default::default()
        };
        for _ in 0..800 {
            w = step_world(&w, &cmd, &body, SIM_STEP);
        }
        // 4 s at 0.25 m/s less the 0.25 s ramp at 1 m/s².
        let expect = 1.0 - 0.25 * 0.25 / 2.0;
        assert!((w.pose.z - expect).abs() < 2e-3, "{}", w.pose.z);
        assert!(w.pose.x.abs() < 1e-12);
    }

    #[test]
    fn wall_contact() {
        let mut scene = Scene::wholebody();
        scene.boxes.push(BoxObstacle::new([-1.0, 0.5], [1.0, 0.7], 1.0));
        let mut w = WorldState::from_scene(&scene, 1);
        let cmd = StepCommands {
            base: Twist2::new(0.25, 0.0, 0.0),
            ..Default::default()
        };
        let body = RobotBody::default();
        let mut hit_at = None;
        for i in 0..400 {
            w = step_world(&w, &cmd, &body, SIM_STEP);
            if w.collided && hit_at.is_none() {
                hit_at = Some(i);
                let c = clearance(w.pose.x, w.pose.z, 0.3, &w.boxes, &[]);
                assert!(c <= 0.0 && c > -1e-9);
            }
        }
        assert!(hit_at.unwrap() as f64 * SIM_STEP < 1.25);
        assert!((w.pose.z - 0.2).abs() < 1e-6);
        assert_eq!(w.collisions, 1);
    }

    #[test]
    fn rng_is_counter_based() {
        let a = counter_rng(5, Stream::Camera, 10).next_u64();
        let _ = counter_rng(5, Stream::Camera, 3).next_u64();
        assert_eq!(counter_rng(5, Stream::Camera, 10).next_u64(), a);
        assert_ne!(counter_rng(5, Stream::Odometry, 10).next_u64(), a);
        assert_ne!(counter_rng(6, Stream::Camera, 10).next_u64(), a);
    }

    #[test]
    fn camera_bytes_repeat() {
        let mut scene = Scene::obstacle();
        scene.start = [0.0, 2.0, 0.0];
        let w = WorldState::from_scene(&scene, 42);
        let (_, a) = render_camera(&w, &scene.camera, false, 9);
        let (_, b) = render_camera(&w, &scene.camera, false, 9);
        assert!(!a.is_empty());
        assert_eq!(a.encode(), b.encode());
    }
}
