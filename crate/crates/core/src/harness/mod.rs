//! Scenario runner, metrics, message-log replay and self test.

pub mod config;
pub mod freeplay;
pub mod metrics;
pub mod navigation;
pub mod obstacle;
pub mod replay;
pub mod runner;
pub mod selftest;
pub mod tally;
pub mod wholebody;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::bus::{Bus, BusError};
use crate::sim::{Scene, SceneError};

pub use config::Params;
pub use metrics::{LoopMetrics, MetricsReport, SimMetrics, WallMetrics};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown scenario {0:?} (expected tally, wholebody, obstacle or freeplay)")]
    UnknownScenario(String),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("scene {scene:?} has no point {point:?}")]
    MissingPoint { scene: String, point: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Tally,
    Wholebody,
    Obstacle,
    Freeplay,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [
        ScenarioId::Tally,
        ScenarioId::Wholebody,
        ScenarioId::Obstacle,
        ScenarioId::Freeplay,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioId::Tally => "tally",
            ScenarioId::Wholebody => "wholebody",
            ScenarioId::Obstacle => "obstacle",
            ScenarioId::Freeplay => "freeplay",
        }
    }

    pub fn default_scene(&self) -> Scene {
        match self {
            ScenarioId::Tally => Scene::tally(),
            ScenarioId::Wholebody => Scene::wholebody(),
            ScenarioId::Obstacle => Scene::obstacle(),
            ScenarioId::Freeplay => Scene::doorway(),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| HarnessError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    pub scene: Scene,
    pub seed: u64,
    pub params: Params,
    /// Pace simulated time against the wall clock.
    pub realtime: bool,
    /// Record every bus frame to this file.
    pub log: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioId, seed: u64) -> Self {
        Self {
            scenario,
            scene: scenario.default_scene(),
            seed,
            params: Params::default(),
            realtime: false,
            log: None,
        }
    }

    pub fn with_scene(mut self, scene: Scene) -> Self {
        self.scene = scene;
        self
    }

    pub fn with_params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }

    fn point(&self, name: &str) -> Result<crate::frames::Pose2, HarnessError> {
        self.scene.point(name).ok_or_else(|| HarnessError::MissingPoint {
            scene: self.scene.name.clone(),
            point: name.to_string(),
        })
    }
}

/// Scene by built-in name or TOML path.
pub fn resolve_scene(name_or_path: &str) -> Result<Scene, HarnessError> {
    match Scene::builtin(name_or_path) {
        Some(s) => Ok(s),
        None => Ok(Scene::load(std::path::Path::new(name_or_path))?),
    }
}

/// Runs a scenario on a private bus.
pub fn run(cfg: &ScenarioConfig) -> Result<MetricsReport, HarnessError> {
    run_on(cfg, Bus::new())
}

/// Runs a scenario on `bus`, publishing the final metrics there.
pub fn run_on(cfg: &ScenarioConfig, bus: Bus) -> Result<MetricsReport, HarnessError> {
    cfg.params.validate()?;
    cfg.scene.validate()?;
    if let Some(path) = &cfg.log {
        bus.record_to_file(path)?;
    }
    let started = Instant::now();
    let mut report = match cfg.scenario {
        ScenarioId::Tally => tally::run_tally(cfg, &bus)?,
        ScenarioId::Wholebody => wholebody::run_wholebody(cfg, &bus)?,
        ScenarioId::Obstacle => obstacle::run_obstacle(cfg, &bus)?,
        ScenarioId::Freeplay => freeplay::run_freeplay(cfg, &bus)?,
    };
    report.wall.wall_time = started.elapsed().as_secs_f64();
    let _ = bus.publish("metrics", runner::microseconds(report.sim.sim_time), report.to_json().into_bytes());
    bus.flush_recorder();
    Ok(report)
}

fn plan_timing(compute: &[f64]) -> (f64, f64) {
    if compute.is_empty() {
        return (0.0, 0.0);
    }
    let max = compute.iter().cloned().fold(0.0, f64::max);
    (max, compute.iter().sum::<f64>() / compute.len() as f64)
}

fn new_report(cfg: &ScenarioConfig) -> MetricsReport {
    MetricsReport {
        scenario: cfg.scenario.name().to_string(),
        scene: cfg.scene.name.clone(),
        seed: cfg.seed,
        success: false,
        sim: SimMetrics::default(),
        wall: WallMetrics::default(),
    }
}
