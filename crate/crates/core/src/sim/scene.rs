//! Declarative world description, loaded from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::Pose2;
use crate::mapping::GridGeometry;

use super::camera::CameraModel;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid scene: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// Axis-aligned box standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxObstacle {
    /// Footprint corner with the smaller `x`, `z`.
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

impl BoxObstacle {
    pub fn new(min: [f64; 2], max: [f64; 2], height: f64) -> Self {
        Self { min, max, height }
    }

    /// Signed planar distance from `(x, z)` to the footprint.
    pub fn distance(&self, x: f64, z: f64) -> f64 {
        let dx = (self.min[0] - x).max(x - self.max[0]);
        let dz = (self.min[1] - z).max(z - self.max[1]);
        if dx <= 0.0 && dz <= 0.0 {
            dx.max(dz)
        } else {
            dx.max(0.0).hypot(dz.max(0.0))
        }
    }
}

/// Capsule-shaped pedestrian following a polyline at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkerScript {
    pub radius: f64,
    pub height: f64,
    pub speed: f64,
    pub waypoints: Vec<[f64; 2]>,
    /// Time spent standing at the first waypoint before walking.
    pub start_time: f64,
    /// Returns to the first waypoint and repeats; otherwise parks at the end.
    pub cyclic: bool,
}

impl Default for WalkerScript {
    fn default() -> Self {
        Self {
            radius: 0.25,
            height: 1.7,
            speed: 0.8,
            waypoints: vec![],
            start_time: 0.0,
            cyclic: false,
        }
    }
}

impl WalkerScript {
    fn legs(&self) -> Vec<([f64; 2], [f64; 2])> {
        let mut pts = self.waypoints.clone();
        if self.cyclic && pts.len() > 1 {
            pts.push(pts[0]);
        }
        pts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Planar position at time `t`.
    pub fn position(&self, t: f64) -> [f64; 2] {
        let Some(&first) = self.waypoints.first() else {
            return [f64::NAN, f64::NAN];
        };
        let legs = self.legs();
        let total: f64 = legs.iter().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).sum();
        if total <= 0.0 || self.speed <= 0.0 || t <= self.start_time {
            return first;
        }
        let mut s = (t - self.start_time) * self.speed;
        if self.cyclic {
            s %= total;
        } else if s >= total {
            return *self.waypoints.last().unwrap();
        }
        for (a, b) in legs {
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if s <= len {
                let f = if len > 0.0 { s / len } else { 0.0 };
                return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
            }
            s -= len;
        }
        *self.waypoints.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_z: f64,
    pub max_x: f64,
    pub max_z: f64,
}

impl Bounds {
    pub fn grid(&self, cell_size: f64) -> GridGeometry {
        let w = ((self.max_x - self.min_x) / cell_size).ceil() as usize;
        let h = ((self.max_z - self.min_z) / cell_size).ceil() as usize;
        GridGeometry::new(self.min_x, self.min_z, cell_size, w.max(1), h.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scene {
    pub name: String,
    pub bounds: Bounds,
    /// Initial robot pose `[x, z, ψ]`.
    pub start: [f64; 3],
    pub lift_height: f64,
    pub boxes: Vec<BoxObstacle>,
    pub walkers: Vec<WalkerScript>,
    /// Named poses `[x, z, ψ]` (HOME, P1, GOAL, ...).
    pub points: BTreeMap<String, [f64; 3]>,
    /// `[start, end]` windows during which the tracking camera is occluded.
    pub occlusions: Vec<[f64; 2]>,
    pub camera: CameraModel,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            name: "empty".into(),
            bounds: Bounds {
                min_x: -5.0,
                min_z: -5.0,
                max_x: 5.0,
                max_z: 5.0,
            },
            start: [0.0, 0.0, 0.0],
            lift_height: 0.8,
            boxes: vec![],
            walkers: vec![],
            points: BTreeMap::new(),
            occlusions: vec![],
            camera: CameraModel::default(),
        }
    }
}

fn walls(b: &Bounds, thickness: f64, height: f64) -> Vec<BoxObstacle> {
    let t = thickness;
    vec![
        BoxObstacle::new([b.min_x, b.min_z], [b.max_x, b.min_z + t], height),
        BoxObstacle::new([b.min_x, b.max_z - t], [b.max_x, b.max_z], height),
        BoxObstacle::new([b.min_x, b.min_z], [b.min_x + t, b.max_z], height),
        BoxObstacle::new([b.max_x - t, b.min_z], [b.max_x, b.max_z], height),
    ]
}

impl Scene {
    pub fn from_toml_str(text: &str) -> Result<Scene, SceneError> {
        let scene: Scene = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Scene, SceneError> {
        Scene::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let b = &self.bounds;
        if !(b.max_x > b.min_x && b.max_z > b.min_z) {
            return Err(SceneError::Invalid("empty bounds".into()));
        }
        for bx in &self.boxes {
            if !(bx.max[0] >= bx.min[0] && bx.max[1] >= bx.min[1] && bx.height > 0.0) {
                return Err(SceneError::Invalid(format!("degenerate box {bx:?}")));
            }
        }
        for w in &self.walkers {
            if w.waypoints.is_empty() || w.radius <= 0.0 {
                return Err(SceneError::Invalid("walker needs waypoints and a radius".into()));
            }
        }
        if self.camera.fx <= 0.0 || self.camera.fy <= 0.0 {
            return Err(SceneError::Invalid("camera focal lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn start_pose(&self) -> Pose2 {
        Pose2::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn point(&self, name: &str) -> Option<Pose2> {
        self.points.get(name).map(|p| Pose2::new(p[0], p[1], p[2]))
    }

    pub fn occluded(&self, t: f64) -> bool {
        self.occlusions.iter().any(|w| t >= w[0] && t < w[1])
    }

    /// 5 m square loop around a central table inside a walled room.
    pub fn tally() -> Scene {
        let bounds = Bounds {
            min_x: -1.5,
            min_z: -1.5,
            max_x: 6.5,
            max_z: 6.5,
        };
        let mut boxes = walls(&bounds, 0.2, 1.0);
        boxes.push(BoxObstacle::new([1.5, 1.5], [3.5, 3.5], 0.75));
        let points = [
            ("HOME", [0.0, 0.0, 0.0]),
            ("P1", [0.0, 5.0, 0.0]),
            ("P2", [5.0, 5.0, 0.0]),
            ("P3", [5.0, 0.0, 0.0]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Scene {
            name: "tally".into(),
            bounds,
            boxes,
            points,
            ..Scene::default()
        }
    }

    /// Open floor for the whole-body hold trial.
    pub fn wholebody() -> Scene {
        Scene {
            name: "wholebody".into(),
            ..Scene::default()
        }
    }

    /// Room with a pedestrian crossing the straight route to GOAL.
    pub fn obstacle() -> Scene {
        let bounds = Bounds {
            min_x: -5.0,
            min_z: -1.5,
            max_x: 5.0,
            max_z: 8.5,
        };
        let mut boxes = walls(&bounds, 0.2, 1.2);
        boxes.push(BoxObstacle::new([-4.0, 5.5], [-2.5, 6.5], 0.9));
        boxes.push(BoxObstacle::new([2.5, 1.0], [3.5, 2.0], 0.9));
        let walker = WalkerScript {
            waypoints: vec![[-3.5, 3.5], [3.8, 3.5]],
            start_time: 4.0,
            ..WalkerScript::default()
        };
        Scene {
            name: "obstacle".into(),
            bounds,
            boxes,
            walkers: vec![walker],
            points: [("GOAL".to_string(), [0.0, 7.0, 0.0])].into_iter().collect(),
            ..Scene::default()
        }
    }

    /// Single 1.2 m corridor with a pedestrian standing in it.
    pub fn blocked_corridor() -> Scene {
        let bounds = Bounds {
            min_x: -3.0,
            min_z: -1.5,
            max_x: 3.0,
            max_z: 8.5,
        };
        let mut boxes = walls(&bounds, 0.2, 1.2);
        boxes.push(BoxObstacle::new([-3.0, 3.0], [-0.6, 4.5], 1.2));
        boxes.push(BoxObstacle::new([0.6, 3.0], [3.0, 4.5], 1.2));
        let walker = WalkerScript {
            waypoints: vec![[0.0, 4.0]],
            ..WalkerScript::default()
        };
        Scene {
            name: "blocked_corridor".into(),
            bounds,
            boxes,
            walkers: vec![walker],
            points: [("GOAL".to_string(), [0.0, 7.0, 0.0])].into_iter().collect(),
            ..Scene::default()
        }
    }

    /// Room with a 0.9 m doorway, used for manual driving.
    pub fn doorway() -> Scene {
        let bounds = Bounds {
            min_x: -3.0,
            min_z: -1.5,
            max_x: 3.0,
            max_z: 6.5,
        };
        let mut boxes = walls(&bounds, 0.2, 1.2);
        boxes.push(BoxObstacle::new([-3.0, 2.5], [-0.45, 2.7], 2.0));
        boxes.push(BoxObstacle::new([0.45, 2.5], [3.0, 2.7], 2.0));
        Scene {
            name: "doorway".into(),
            bounds,
            boxes,
            points: [("GOAL".to_string(), [0.0, 5.0, 0.0])].into_iter().collect(),
            ..Scene::default()
        }
    }

    pub fn builtin(name: &str) -> Option<Scene> {
        match name {
            "tally" => Some(Scene::tally()),
            "wholebody" | "empty" => Some(Scene::wholebody()),
            "obstacle" => Some(Scene::obstacle()),
            "blocked_corridor" => Some(Scene::blocked_corridor()),
            "doorway" | "freeplay" => Some(Scene::doorway()),
            _ => None,
        }
    }
}
