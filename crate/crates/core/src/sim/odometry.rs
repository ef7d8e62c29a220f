//! Drifting odometry with keyframe-based loop closure.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::frames::{normalize_angle, Pose2};
use crate::mapping::PoseQuality;

/// Per-step noise is zero-mean Gaussian with standard deviation proportional
/// to the square root of the distance travelled in the step, so variance
/// grows linearly with distance regardless of the step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdometryNoise {
    /// Translational noise, m per √m travelled.
    pub k_trans: f64,
    /// Heading noise, rad per √m travelled.
    pub k_yaw: f64,
    /// Noise multiplier while the tracking camera is occluded.
    pub occlusion_factor: f64,
}

impl Default for OdometryNoise {
    fn default() -> Self {
        Self {
            k_trans: 0.0075,
            k_yaw: 0.0008,
            occlusion_factor: 2.0,
        }
    }
}

impl OdometryNoise {
    pub fn zero() -> Self {
        Self {
            k_trans: 0.0,
            k_yaw: 0.0,
            occlusion_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopClosureParams {
    pub enabled: bool,
    pub keyframe_spacing: f64,
    pub keyframe_radius: f64,
    pub residual: f64,
    /// Keyframes laid within this much recent travel are not matched.
    pub recent_exclusion: f64,
    /// Closure checks per second.
    pub rate: f64,
}

impl Default for LoopClosureParams {
    fn default() -> Self {
        Self {
            enabled: true,
            keyframe_spacing: 1.0,
            keyframe_radius: 0.5,
            residual: 0.1,
            recent_exclusion: 2.0,
            rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub truth: Pose2,
    pub estimate: Pose2,
    /// Odometer reading when laid.
    pub travelled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdomState {
    pub estimate: Pose2,
    pub truth: Pose2,
    pub quality: PoseQuality,
    pub keyframes: Vec<Keyframe>,
    pub travelled: f64,
    pub closures: u32,
}

/// Estimate minus truth as `(dx, dz, dψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub dx: f64,
    pub dz: f64,
    pub dyaw: f64,
}

impl PoseError {
    pub fn position_norm(&self) -> f64 {
        self.dx.hypot(self.dz)
    }
}

impl OdomState {
    pub fn new(start: Pose2) -> Self {
        Self {
            estimate: start,
            truth: start,
            quality: PoseQuality::Good,
            keyframes: vec![],
            travelled: 0.0,
            closures: 0,
        }
    }

    pub fn error(&self) -> PoseError {
        PoseError {
            dx: self.estimate.x - self.truth.x,
            dz: self.estimate.z - self.truth.z,
            dyaw: normalize_angle(self.estimate.yaw - self.truth.yaw),
        }
    }

    fn maybe_keyframe(&mut self, spacing: f64) {
        let due = match self.keyframes.last() {
            None => true,
            Some(k) => self.travelled - k.travelled >= spacing,
        };
        if due {
            self.keyframes.push(Keyframe {
                truth: self.truth,
                estimate: self.estimate,
                travelled: self.travelled,
            });
        }
    }
}

/// Integrates the true increment `prev → next` into the estimate with noise.
pub fn odometry_step<R: Rng>(
    od: &OdomState,
    prev: &Pose2,
    next: &Pose2,
    noise: &OdometryNoise,
    occluded: bool,
    keyframe_spacing: f64,
    rng: &mut R,
) -> OdomState {
    let mut out = od.clone();
    out.truth = *next;
    out.quality = if occluded {
        PoseQuality::Degraded
    } else {
        PoseQuality::Good
    };
    let delta = prev.between(next);
    let dist = delta.x.hypot(delta.z);
    if dist == 0.0 && delta.yaw == 0.0 {
        return out;
    }
    let factor = if occluded { noise.occlusion_factor } else { 1.0 };
    let root = dist.sqrt();
    let st = factor * noise.k_trans * root;
    let sy = factor * noise.k_yaw * root;
    let mut gauss = || -> f64 { StandardNormal.sample(rng) };
    let noisy = Pose2 {
        x: delta.x + st * gauss(),
        z: delta.z + st * gauss(),
        yaw: delta.yaw + sy * gauss(),
    };
    out.estimate = out.estimate.compose(&noisy);
    out.travelled += dist;
    out.maybe_keyframe(keyframe_spacing);
    out
}

/// Shrinks the estimate error by `residual` when the true pose is within
/// `radius` of a keyframe laid more than `recent_exclusion` of travel ago.
pub fn loop_closure_update(od: &OdomState, radius: f64, residual: f64, recent_exclusion: f64) -> OdomState {
    let mut out = od.clone();
    let hit = od.keyframes.iter().any(|k| {
        od.travelled - k.travelled >= recent_exclusion
            && (k.truth.x - od.truth.x).hypot(k.truth.z - od.truth.z) <= radius
    });
    if !hit {
        return out;
    }
    let e = od.error();
    let r = residual.clamp(0.0, 1.0);
    out.estimate = Pose2::new(
        od.truth.x + r * e.dx,
        od.truth.z + r * e.dz,
        od.truth.yaw + r * e.dyaw,
    );
    out.closures += 1;
    out
}
