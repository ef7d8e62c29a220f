//! Parameter tables. Every field can be overridden from a TOML file; missing
//! keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::base_control::{DockParams, PidGains, PursuitParams};
use crate::mapping::MappingParams;
use crate::manip::EeHoldParams;
use crate::planner::PlannerParams;
use crate::sim::{LoopClosureParams, OdometryNoise, RobotBody};

use super::HarnessError;

/// Task rates, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub pose: f64,
    pub control: f64,
    pub cloud: f64,
    pub fusion: f64,
    pub ee_hold: f64,
    pub state: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            pose: 120.0,
            control: 50.0,
            cloud: 5.0,
            fusion: 10.0,
            ee_hold: 120.0,
            state: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TallyParams {
    pub loops: u32,
    /// Per-leg limit, simulated seconds.
    pub leg_timeout: f64,
    /// EE pose in the base frame when marking, `[x, y, z]`.
    pub mark: [f64; 3],
    /// Time spent at the mark before the next loop.
    pub mark_dwell: f64,
}

impl Default for TallyParams {
    fn default() -> Self {
        Self {
            loops: 10,
            leg_timeout: 120.0,
            mark: [0.0, 0.05, 0.45],
            mark_dwell: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WholebodyParams {
    /// Lateral travel, m (positive is to the robot's left).
    pub distance: f64,
    pub speed: f64,
    /// Pose messages of delay between the localizer and the hold loop.
    pub latency_frames: usize,
    /// Feed the hold loop the true pose instead of the odometry estimate.
    pub exact_feedback: bool,
    /// Observation time after the base stops.
    pub settle: f64,
    /// Initial EE pose in the base frame, `[x, y, z]`.
    pub ee: [f64; 3],
    /// Largest world EE deviation counted as a success, m.
    pub tolerance: f64,
}

impl Default for WholebodyParams {
    fn default() -> Self {
        Self {
            distance: 0.4,
            speed: 0.25,
            latency_frames: 1,
            exact_feedback: false,
            settle: 2.0,
            ee: [0.0, 1.0, 0.35],
            tolerance: 0.016,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObstacleParams {
    pub timeout: f64,
    /// A run ends once the robot has been halted without a path this long.
    pub halt_hold: f64,
}

impl Default for ObstacleParams {
    fn default() -> Self {
        Self {
            timeout: 120.0,
            halt_hold: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeplayParams {
    /// Simulated seconds; 0 runs until stopped.
    pub duration: f64,
    /// Teleop twists older than this are treated as zero.
    pub teleop_timeout: f64,
}

impl Default for FreeplayParams {
    fn default() -> Self {
        Self {
            duration: 20.0,
            teleop_timeout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    pub body: RobotBody,
    pub ema_alpha: f64,
    pub pid: PidGains,
    pub pursuit: PursuitParams,
    pub dock: DockParams,
    pub planner: PlannerParams,
    pub mapping: MappingParams,
    pub odometry: OdometryNoise,
    pub loop_closure: LoopClosureParams,
    pub ee_hold: EeHoldParams,
    pub rates: Rates,
    pub tally: TallyParams,
    pub wholebody: WholebodyParams,
    pub obstacle: ObstacleParams,
    pub freeplay: FreeplayParams,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            body: RobotBody::default(),
            ema_alpha: 0.2,
            pid: PidGains::default(),
            pursuit: PursuitParams::default(),
            dock: DockParams::default(),
            planner: PlannerParams::default(),
            mapping: MappingParams::default(),
            odometry: OdometryNoise::default(),
            loop_closure: LoopClosureParams::default(),
            ee_hold: EeHoldParams::default(),
            rates: Rates::default(),
            tally: TallyParams::default(),
            wholebody: WholebodyParams::default(),
            obstacle: ObstacleParams::default(),
            freeplay: FreeplayParams::default(),
        }
    }
}

impl Params {
    pub fn from_toml_str(text: &str) -> Result<Params, HarnessError> {
        let p: Params = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Params, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Params::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("parameters serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |what: &str| Err(HarnessError::Config(what.to_string()));
        let r = &self.rates;
        if [r.pose, r.control, r.cloud, r.fusion, r.ee_hold, r.state]
            .iter()
            .any(|&x| !(x > 0.0 && x <= 200.0))
        {
            return bad("rates must lie in (0, 200] Hz");
        }
        if !(0.0..1.0).contains(&self.ema_alpha) {
            return bad("ema_alpha must lie in [0, 1)");
        }
        if self.planner.heuristic_weight < 1.0 {
            return bad("planner.heuristic_weight must be at least 1");
        }
        if self.tally.loops == 0 {
            return bad("tally.loops must be at least 1");
        }
        if !(self.ee_hold.tau_trans > 0.0 && self.ee_hold.tau_rot > 0.0) {
            return bad("ee_hold time constants must be positive");
        }
        if self.mapping.cell_size <= 0.0 || self.mapping.voxel_size <= 0.0 {
            return bad("mapping sizes must be positive");
        }
        if !(self.loop_closure.rate > 0.0) {
            return bad("loop_closure.rate must be positive");
        }
        let l = &self.body.limits;
        if !(l.v_max > 0.0 && l.omega_max > 0.0 && l.steer_rate_max > 0.0 && l.drive_accel_max > 0.0) {
            return bad("velocity limits must be positive");
        }
        Ok(())
    }
}
