//! Four-module swerve drive kinematics.
//!
//! Module order is FL, FR, RR, RL. The chassis-to-module map is the 8×3
//! coupling matrix
//!
//! ```text
//! [vx_1..vx_4]   [1 0  W][vx]        x rows: ω coefficients ( W, −W, −W,  W)
//! [vy_1..vy_4] = [0 1  L][vy]        y rows: ω coefficients ( L,  L, −L, −L)
//!                        [ω ]
//! ```
//!
//! followed by a polar conversion to steering angle and signed drive speed.

use serde::{Deserialize, Serialize};

use crate::frames::{normalize_angle, Twist2};

pub const MODULE_COUNT: usize = 4;

const OMEGA_X: [f64; MODULE_COUNT] = [1.0, -1.0, -1.0, 1.0];
const OMEGA_Y: [f64; MODULE_COUNT] = [1.0, 1.0, -1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChassisGeometry {
    pub half_width: f64,
    pub half_length: f64,
}

impl Default for ChassisGeometry {
    fn default() -> Self {
        Self {
            half_width: 0.152,
            half_length: 0.106,
        }
    }
}

impl ChassisGeometry {
    /// Coefficients `(cx, cy)` such that module `i` moves with
    /// `(vx + cx·ω, vy + cy·ω)`.
    pub fn omega_coefficients(&self, module: usize) -> (f64, f64) {
        (
            OMEGA_X[module] * self.half_width,
            OMEGA_Y[module] * self.half_length,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModuleState {
    /// Steering angle in `(−π, π]`, measured from forward towards left.
    pub steer: f64,
    /// Signed wheel surface speed, m/s.
    pub speed: f64,
}

impl ModuleState {
    pub fn new(steer: f64, speed: f64) -> Self {
        Self {
            steer: normalize_angle(steer),
            speed,
        }
    }

    /// Cartesian velocity `(vx, vy)` of the module contact point.
    pub fn velocity(&self) -> (f64, f64) {
        (self.speed * self.steer.cos(), self.speed * self.steer.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocityLimits {
    pub v_max: f64,
    pub omega_max: f64,
    pub steer_rate_max: f64,
    pub drive_accel_max: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self {
            v_max: 0.25,
            omega_max: 1.0,
            steer_rate_max: 12.0,
            drive_accel_max: 1.0,
        }
    }
}

/// Cartesian module velocities from the coupling matrix.
pub fn module_velocities(v: &Twist2, g: &ChassisGeometry) -> [(f64, f64); MODULE_COUNT] {
    std::array::from_fn(|i| {
        let (cx, cy) = g.omega_coefficients(i);
        (v.vx + cx * v.omega, v.vy + cy * v.omega)
    })
}

/// Inverse kinematics. A module whose Cartesian velocity is exactly zero
/// keeps its previous steering angle.
pub fn inverse_kinematics(
    v: &Twist2,
    g: &ChassisGeometry,
    previous_steer: &[f64; MODULE_COUNT],
) -> [ModuleState; MODULE_COUNT] {
    let vel = module_velocities(v, g);
    std::array::from_fn(|i| {
        let (vx, vy) = vel[i];
        if vx == 0.0 && vy == 0.0 {
            ModuleState::new(previous_steer[i], 0.0)
        } else {
            ModuleState::new(vy.atan2(vx), vx.hypot(vy))
        }
    })
}

/// Shortest-turn optimization: if reaching `target.steer` needs more than a
/// quarter turn, steer to the opposite angle and reverse the wheel.
pub fn optimize_module(current_steer: f64, target: ModuleState) -> ModuleState {
    let delta = normalize_angle(target.steer - current_steer);
    if delta.abs() > std::f64::consts::FRAC_PI_2 {
        ModuleState::new(target.steer + std::f64::consts::PI, -target.speed)
    } else {
        target
    }
}

/// Least-squares chassis twist from the eight module velocity components.
///
/// The columns of the coupling matrix are mutually orthogonal, so the normal
/// equations are diagonal: `CᵀC = diag(4, 4, 4(W² + L²))`.
pub fn forward_kinematics(states: &[ModuleState; MODULE_COUNT], g: &ChassisGeometry) -> Twist2 {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sw = 0.0;
    for (i, s) in states.iter().enumerate() {
        let (vx, vy) = s.velocity();
        let (cx, cy) = g.omega_coefficients(i);
        sx += vx;
        sy += vy;
        sw += cx * vx + cy * vy;
    }
    let n = MODULE_COUNT as f64;
    let r2 = g.half_width * g.half_width + g.half_length * g.half_length;
    Twist2::new(sx / n, sy / n, sw / (n * r2))
}

/// Uniformly scales translation into `v_max` and clamps rotation to `omega_max`.
pub fn clamp_twist(v: &Twist2, lim: &VelocityLimits) -> Twist2 {
    let speed = v.linear_speed();
    let scale = if speed > lim.v_max * (1.0 + 1e-12) { lim.v_max / speed } else { 1.0 };
    Twist2::new(
        v.vx * scale,
        v.vy * scale,
        v.omega.clamp(-lim.omega_max, lim.omega_max),
    )
}

/// Rate-limits actual module states toward their setpoints: steering turns
/// along the shortest arc at most `steer_rate_max·dt`, signed wheel speed
/// changes by at most `drive_accel_max·dt`.
pub fn slew_modules(
    actual: &[ModuleState; MODULE_COUNT],
    setpoint: &[ModuleState; MODULE_COUNT],
    lim: &VelocityLimits,
    dt: f64,
) -> [ModuleState; MODULE_COUNT] {
    let max_turn = lim.steer_rate_max * dt;
    let max_dv = lim.drive_accel_max * dt;
    std::array::from_fn(|i| {
        let a = actual[i];
        let s = setpoint[i];
        let turn = normalize_angle(s.steer - a.steer).clamp(-max_turn, max_turn);
        let dv = (s.speed - a.speed).clamp(-max_dv, max_dv);
        ModuleState::new(a.steer + turn, a.speed + dv)
    })
}

/// Stateful IK front-end: remembers steering angles between calls so that
/// stopped modules hold their heading and reversals use the shortest turn.
#[derive(Debug, Clone)]
pub struct SwerveController {
    pub geometry: ChassisGeometry,
    steer: [f64; MODULE_COUNT],
}

impl SwerveController {
    pub fn new(geometry: ChassisGeometry) -> Self {
        Self {
            geometry,
            steer: [0.0; MODULE_COUNT],
        }
    }

    /// Current steering memory, used as the "previous angle" reference.
    pub fn steer(&self) -> [f64; MODULE_COUNT] {
        self.steer
    }

    pub fn set_steer(&mut self, steer: [f64; MODULE_COUNT]) {
        self.steer = steer;
    }

    pub fn command(&mut self, v: &Twist2) -> [ModuleState; MODULE_COUNT] {
        let raw = inverse_kinematics(v, &self.geometry, &self.steer);
        let out: [ModuleState; MODULE_COUNT] =
            std::array::from_fn(|i| optimize_module(self.steer[i], raw[i]));
        for (m, s) in self.steer.iter_mut().zip(&out) {
            *m = s.steer;
        }
        out
    }
}
