//! Mapping, planning and path tracking as wired together on the robot.

use std::time::Instant;

use crate::base_control::{pursuit_step, PursuitOutput, PursuitState};
use crate::bus::topics::PlanMsg;
use crate::bus::Bus;
use crate::frames::{Pose2, Pose3};
use crate::mapping::{
    estimate_floor, fuse, inflate, integrate_cloud, preprocess_cloud, project_occupancy, CostMap, FloorEstimate,
    PointCloud, PoseQuality, VoxelMap,
};
use crate::planner::{extract_waypoints, needs_replan, plan, progress_index, Path, PlanError, Waypoints};
use crate::sim::{clearance, counter_rng, render_depth, DepthScene, Scene, Stream};

use super::config::Params;
use super::runner::microseconds;

/// Static map of a scene from a camera sweep over its free space, walkers
/// excluded. Returns the cost map and the floor height.
pub fn build_static_map(scene: &Scene, params: &Params, seed: u64) -> (CostMap, f64) {
    let mp = &params.mapping;
    let geometry = scene.bounds.grid(mp.cell_size);
    let depth_scene = DepthScene {
        boxes: &scene.boxes,
        walkers: vec![],
    };
    let b = &scene.bounds;
    let spacing = 1.5;
    let mut views = Vec::new();
    let nx = ((b.max_x - b.min_x) / spacing).floor() as usize;
    let nz = ((b.max_z - b.min_z) / spacing).floor() as usize;
    for i in 0..=nx {
        for j in 0..=nz {
            let x = b.min_x + spacing * (i as f64 + 0.5);
            let z = b.min_z + spacing * (j as f64 + 0.5);
            if x < b.max_x && z < b.max_z && clearance(x, z, params.body.radius, &scene.boxes, &[]) > 0.1 {
                views.push((x, z));
            }
        }
    }
    let start = scene.start_pose();
    views.push((start.x, start.z));

    let mut voxels = VoxelMap::new(mp.voxel_size);
    let mut floor = FloorEstimate::new(mp.floor_alpha, mp.floor_band);
    let mut counter = 0u64;
    for &(x, z) in &views {
        for k in 0..4 {
            let base = Pose2::new(x, z, k as f64 * std::f64::consts::FRAC_PI_2);
            let cam_pose = scene.camera.world_pose(&base, scene.lift_height);
            let mut rng = counter_rng(seed, Stream::Mapping, counter);
            counter += 1;
            let cloud = render_depth(&scene.camera, &cam_pose, &depth_scene, false, 0.0, &mut rng);
            let world = preprocess_cloud(&cloud, &cam_pose, mp);
            floor = estimate_floor(&world, &floor);
            integrate_cloud(&mut voxels, &world, &Pose3::identity(), PoseQuality::Good);
        }
    }
    let floor_h = floor.height_or(0.0);
    let grid = project_occupancy(&voxels, floor_h, mp.occupancy_floor_band, mp.robot_height, geometry);
    (inflate(&grid, mp.inflation_radius, mp.soft_band), floor_h)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NavStats {
    pub plans: u32,
    pub replans: u32,
    pub latencies: Vec<f64>,
    /// Host seconds per planner call.
    pub compute: Vec<f64>,
    pub lethal_publications: u32,
}

pub struct Navigator {
    params: Params,
    pub global: CostMap,
    pub fused: CostMap,
    pub floor: f64,
    local: Option<(f64, CostMap)>,
    pub goal: Option<Pose2>,
    pub path: Option<Path>,
    pub waypoints: Waypoints,
    pub progress: usize,
    pursuit: PursuitState,
    pub failure: Option<PlanError>,
    detection: Option<f64>,
    pub stats: NavStats,
    bus: Bus,
}

impl Navigator {
    pub fn new(global: CostMap, floor: f64, params: Params, bus: Bus) -> Self {
        Self {
            params,
            fused: global.clone(),
            global,
            floor,
            local: None,
            goal: None,
            path: None,
            waypoints: Waypoints::default(),
            progress: 0,
            pursuit: PursuitState::default(),
            failure: None,
            detection: None,
            stats: NavStats::default(),
            bus,
        }
    }

    pub fn set_goal(&mut self, goal: Pose2, est: &Pose2, t: f64) -> Result<(), PlanError> {
        self.goal = Some(goal);
        self.detection = None;
        self.replan(est, t)
    }

    pub fn clear_goal(&mut self) {
        self.goal = None;
        self.path = None;
        self.waypoints = Waypoints::default();
        self.failure = None;
        self.detection = None;
    }

    fn replan(&mut self, est: &Pose2, t: f64) -> Result<(), PlanError> {
        let goal = self.goal.ok_or(PlanError::NoPath)?;
        let started = Instant::now();
        let result = plan(&self.fused, est, &goal, &self.params.planner);
        self.stats.compute.push(started.elapsed().as_secs_f64());
        match result {
            Ok(path) => {
                if needs_replan(&path, 0, &self.fused) {
                    self.stats.lethal_publications += 1;
                }
                self.waypoints = extract_waypoints(&path, &self.fused.geometry);
                self.path = Some(path);
                self.progress = 0;
                self.pursuit.reset();
                self.failure = None;
                self.stats.plans += 1;
                self.publish_plan(t);
                Ok(())
            }
            Err(e) => {
                self.path = None;
                self.waypoints = Waypoints::default();
                self.failure = Some(e.clone());
                Err(e)
            }
        }
    }

    fn publish_plan(&self, t: f64) {
        if self.bus.wanted("plan") {
            let msg = PlanMsg {
                t,
                waypoints: self.waypoints.points.iter().map(|p| [p.0, p.1]).collect(),
                cost: self.path.as_ref().map_or(0.0, |p| p.cost),
            };
            let _ = self.bus.publish_json("plan", microseconds(t), &msg);
        }
    }

    /// Builds the local cost map from one sensor cloud.
    pub fn observe(&mut self, cloud: &PointCloud, cam_pose: &Pose3, quality: PoseQuality) {
        let mp = &self.params.mapping;
        let world = preprocess_cloud(cloud, cam_pose, mp);
        let mut voxels = VoxelMap::new(mp.voxel_size);
        integrate_cloud(&mut voxels, &world, &Pose3::identity(), quality);
        if voxels.is_empty() && quality == PoseQuality::Degraded {
            return;
        }
        let grid = project_occupancy(
            &voxels,
            self.floor,
            mp.occupancy_floor_band,
            mp.robot_height,
            self.global.geometry,
        );
        self.local = Some((cloud.timestamp, inflate(&grid, mp.inflation_radius, mp.soft_band)));
    }

    /// Blends the latest local map into the global one and replans if the
    /// rest of the current path became lethal. Returns true if a new plan
    /// was published.
    pub fn fusion_tick(&mut self, est: &Pose2, t: f64) -> bool {
        let observed = self.local.as_ref().map(|(ts, _)| *ts);
        self.fused = match &self.local {
            Some((_, local)) => fuse(&self.global, local, self.params.mapping.fuse_lambda).expect("same geometry"),
            None => self.global.clone(),
        };
        if self.bus.wanted("costmap") {
            let _ = self.bus.publish("costmap", microseconds(t), self.fused.encode());
        }
        if self.goal.is_none() {
            return false;
        }
        let blocked = match &self.path {
            Some(path) => {
                self.progress = progress_index(path, &self.fused.geometry, est.x, est.z, self.progress);
                needs_replan(path, self.progress, &self.fused)
            }
            None => true,
        };
        if !blocked {
            return false;
        }
        if self.path.is_some() && self.detection.is_none() {
            self.detection = Some(observed.unwrap_or(t));
        }
        if self.replan(est, t).is_err() {
            return false;
        }
        if let Some(d) = self.detection.take() {
            self.stats.replans += 1;
            self.stats.latencies.push(t - d);
        }
        true
    }

    /// Path tracking command; `None` when there is no path to follow.
    pub fn control(&mut self, est: &Pose2, speed: f64, dt: f64) -> Option<PursuitOutput> {
        self.path.as_ref()?;
        pursuit_step(
            est,
            &self.waypoints,
            &self.params.pursuit,
            &self.params.pid,
            &self.params.body.limits,
            speed,
            dt,
            &mut self.pursuit,
        )
        .ok()
    }
}
