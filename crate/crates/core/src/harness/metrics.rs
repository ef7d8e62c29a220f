//! Metrics file schema.
//!
//! ```json
//! {
//!   "scenario": "tally", "scene": "tally", "seed": 1, "success": true,
//!   "sim":  { ...everything derived from simulated time... },
//!   "wall": { "wall_time": 3.2, "max_plan_compute": 0.004, "mean_plan_compute": 0.002 }
//! }
//! ```
//!
//! `sim` is a pure function of scenario, seed and configuration; `wall`
//! holds host timings only.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopMetrics {
    pub index: u32,
    pub completed: bool,
    /// True docked position minus HOME, m.
    pub dx: f64,
    pub dz: f64,
    /// True docked heading minus HOME, rad.
    pub yaw_error: f64,
    /// Ground position of the EE at the mark, `[x, z]`.
    pub mark: [f64; 2],
    /// Distance from the mark to where it lands with the robot exactly at HOME.
    pub mark_deviation: f64,
    /// Odometry estimate minus truth at dock completion, `[dx, dz, dψ]`.
    pub odometry_error: [f64; 3],
    pub sim_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimMetrics {
    pub sim_time: f64,
    pub collisions: u32,
    pub closures: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopMetrics>,
    /// Largest docked position error ‖(dx, dz)‖ over completed loops.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ee_deviation: Option<f64>,
    pub plans: u32,
    pub replans: u32,
    /// Largest detection-to-publication time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replan_latency: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replan_latencies: Vec<f64>,
    /// Published plans that crossed a lethal cell of the map they came from.
    pub lethal_plan_publications: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_reached: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halt_reason: Option<String>,
    /// Odometry estimate minus truth at the end of the run, `[dx, dz, dψ]`.
    pub final_odometry_error: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WallMetrics {
    pub wall_time: f64,
    pub max_plan_compute: f64,
    pub mean_plan_compute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub scene: String,
    pub seed: u64,
    pub success: bool,
    pub sim: SimMetrics,
    pub wall: WallMetrics,
}

#[derive(Serialize)]
struct SimView<'a> {
    scenario: &'a str,
    scene: &'a str,
    seed: u64,
    success: bool,
    sim: &'a SimMetrics,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// The report without host timings.
    pub fn sim_json(&self) -> String {
        serde_json::to_string_pretty(&SimView {
            scenario: &self.scenario,
            scene: &self.scene,
            seed: self.seed,
            success: self.success,
            sim: &self.sim,
        })
        .expect("metrics serialize")
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<MetricsReport, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_view_excludes_wall() {
        let mut r = MetricsReport {
            scenario: "tally".into(),
            scene: "tally".into(),
            seed: 3,
            success: true,
            sim: SimMetrics::default(),
            wall: WallMetrics::default(),
        };
        let a = r.sim_json();
        r.wall.wall_time = 12.0;
        assert_eq!(r.sim_json(), a);
        assert!(!a.contains("wall"));
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
