//! Topic table and payload schemas.

use serde::{Deserialize, Serialize};

use crate::frames::{Pose2, Pose3, Twist2};
use crate::manip::LiftCommand;
use crate::mapping::PoseQuality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    /// Freshest-wins with a bounded drop-oldest queue.
    Streaming,
    /// Reliable, published when the content changes.
    OnChange,
    /// Request/response.
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Json,
    /// `u32` count + `f32` triples, little-endian.
    Cloud,
    /// Grid header + row-major cost bytes.
    Costmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopicSchema {
    pub name: &'static str,
    pub delivery: Delivery,
    pub encoding: Encoding,
    /// Nominal rate, if periodic.
    pub rate_hz: Option<f64>,
}

pub const STREAM_DEPTH: usize = 8;

pub const TOPICS: &[TopicSchema] = &[
    TopicSchema { name: "pose", delivery: Delivery::Streaming, encoding: Encoding::Json, rate_hz: Some(120.0) },
    TopicSchema { name: "true_pose", delivery: Delivery::Streaming, encoding: Encoding::Json, rate_hz: Some(120.0) },
    TopicSchema { name: "cloud", delivery: Delivery::Streaming, encoding: Encoding::Cloud, rate_hz: Some(5.0) },
    TopicSchema { name: "costmap", delivery: Delivery::Streaming, encoding: Encoding::Costmap, rate_hz: Some(10.0) },
    TopicSchema { name: "cmd_twist", delivery: Delivery::Streaming, encoding: Encoding::Json, rate_hz: Some(50.0) },
    TopicSchema { name: "cmd_lift", delivery: Delivery::Streaming, encoding: Encoding::Json, rate_hz: None },
    TopicSchema { name: "cmd_ee", delivery: Delivery::Streaming, encoding: Encoding::Json, rate_hz: Some(120.0) },
    TopicSchema { name: "lift_state", delivery: Delivery::Streaming, encoding: Encoding::Json, rate_hz: Some(50.0) },
    TopicSchema { name: "ee_state", delivery: Delivery::Streaming, encoding: Encoding::Json, rate_hz: Some(50.0) },
    TopicSchema { name: "plan", delivery: Delivery::OnChange, encoding: Encoding::Json, rate_hz: None },
    TopicSchema { name: "metrics", delivery: Delivery::OnChange, encoding: Encoding::Json, rate_hz: None },
    TopicSchema { name: "goal", delivery: Delivery::Service, encoding: Encoding::Json, rate_hz: None },
    TopicSchema { name: "scenario", delivery: Delivery::Service, encoding: Encoding::Json, rate_hz: None },
    TopicSchema { name: "subscribe", delivery: Delivery::Service, encoding: Encoding::Json, rate_hz: None },
];

pub fn schema(topic: &str) -> Option<&'static TopicSchema> {
    TOPICS.iter().find(|t| t.name == topic)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub yaw: f64,
    pub quality: PoseQuality,
    /// `[qx, qy, qz, qw, x, y, z]`
    pub pose: Pose3,
}

impl PoseMsg {
    pub fn new(t: f64, p: Pose2, quality: PoseQuality) -> Self {
        Self {
            t,
            x: p.x,
            z: p.z,
            yaw: p.yaw,
            quality,
            pose: Pose3::from_pose2(p, 0.0),
        }
    }

    pub fn pose2(&self) -> Pose2 {
        Pose2::new(self.x, self.z, self.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistMsg {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl From<Twist2> for TwistMsg {
    fn from(t: Twist2) -> Self {
        Self {
            vx: t.vx,
            vy: t.vy,
            omega: t.omega,
        }
    }
}

impl From<TwistMsg> for Twist2 {
    fn from(t: TwistMsg) -> Self {
        Twist2::new(t.vx, t.vy, t.omega)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMsg {
    pub t: f64,
    pub waypoints: Vec<[f64; 2]>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRequest {
    pub x: f64,
    pub z: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalReply {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum ScenarioRequest {
    Status,
    Pause,
    Resume,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReply {
    pub scenario: String,
    pub t: f64,
    pub running: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscribeRequest {
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftStateMsg {
    pub t: f64,
    pub height: f64,
    pub velocity: f64,
}

pub type LiftCmdMsg = LiftCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeStateMsg {
    pub t: f64,
    /// World frame.
    pub world: Pose3,
    /// Base frame.
    pub base: Pose3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeCmdMsg {
    /// Base-frame target.
    pub pose: Pose3,
}
