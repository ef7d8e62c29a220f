//! Arm and lift control: joint stiffness law, trapezoidal command shaping,
//! kinematic lift and world-frame end-effector holding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{compose, inverse, slerp, Pose3};

pub const ARM_PERIOD: f64 = 1.0 / 200.0;
pub const LIFT_MIN: f64 = 0.60;
pub const LIFT_MAX: f64 = 1.24;
pub const LIFT_SPEED_MAX: f64 = 0.035;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManipError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

impl JointState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let qd = vec![0.0; q.len()];
        Self { q, qd }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl StiffnessGains {
    pub fn uniform(n: usize, kp: f64, kd: f64) -> Self {
        Self {
            kp: vec![kp; n],
            kd: vec![kd; n],
        }
    }
}

pub trait GravityModel {
    fn torque(&self, q: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoGravity;

impl GravityModel for NoGravity {
    fn torque(&self, q: &[f64]) -> Vec<f64> {
        vec![0.0; q.len()]
    }
}

fn check(expected: usize, got: usize) -> Result<(), ManipError> {
    if expected == got {
        Ok(())
    } else {
        Err(ManipError::DimensionMismatch { expected, got })
    }
}

/// `τ_g(q) + K_p (q_ref − q) + K_d (q̇_ref − q̇)`.
pub fn stiffness_torque(
    state: &JointState,
    reference: &JointState,
    gains: &StiffnessGains,
    gravity: &dyn GravityModel,
) -> Result<Vec<f64>, ManipError> {
    let n = state.q.len();
    for got in [state.qd.len(), reference.q.len(), reference.qd.len(), gains.kp.len(), gains.kd.len()] {
        check(n, got)?;
    }
    let tg = gravity.torque(&state.q);
    check(n, tg.len())?;
    Ok((0..n)
        .map(|i| {
            tg[i] + gains.kp[i] * (reference.q[i] - state.q[i]) + gains.kd[i] * (reference.qd[i] - state.qd[i])
        })
        .collect())
}

/// Planar two-link arm in a vertical plane with point masses at the link
/// ends. Joint angles are measured from the horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLinkArm {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub gravity: f64,
}

impl Default for TwoLinkArm {
    fn default() -> Self {
        Self {
            l1: 0.3,
            l2: 0.25,
            m1: 1.0,
            m2: 0.8,
            gravity: 9.81,
        }
    }
}

impl GravityModel for TwoLinkArm {
    fn torque(&self, q: &[f64]) -> Vec<f64> {
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        let t2 = self.m2 * self.gravity * self.l2 * c12;
        vec![(self.m1 + self.m2) * self.gravity * self.l1 * c1 + t2, t2]
    }
}

impl TwoLinkArm {
    pub fn mass_matrix(&self, q: &[f64]) -> [[f64; 2]; 2] {
        let c2 = q[1].cos();
        let (l1, l2, m1, m2) = (self.l1, self.l2, self.m1, self.m2);
        let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
        [[m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2), m12], [m12, m2 * l2 * l2]]
    }

    pub fn coriolis(&self, q: &[f64], qd: &[f64]) -> [f64; 2] {
        let h = self.m2 * self.l1 * self.l2 * q[1].sin();
        [-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]]
    }

    /// Advances the arm one semi-implicit Euler step under `torque`.
    pub fn integrate(&self, state: &mut JointState, torque: &[f64], dt: f64) {
        let m = self.mass_matrix(&state.q);
        let c = self.coriolis(&state.q, &state.qd);
        let g = self.torque(&state.q);
        let rhs = [torque[0] - c[0] - g[0], torque[1] - c[1] - g[1]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let acc = [
            (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
            (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
        ];
        for i in 0..2 {
            state.qd[i] += acc[i] * dt;
            state.q[i] += state.qd[i] * dt;
        }
    }
}

/// Holds `reference` under the stiffness law with a constant external torque
/// and returns the final state. Control runs at 200 Hz, physics substeps at
/// `substeps` per control period.
pub fn simulate_two_link(
    arm: &TwoLinkArm,
    reference: &JointState,
    gains: &StiffnessGains,
    external: [f64; 2],
    duration: f64,
    substeps: usize,
) -> Result<JointState, ManipError> {
    let mut state = reference.clone();
    let steps = (duration / ARM_PERIOD).round() as usize;
    let h = ARM_PERIOD / substeps as f64;
    for _ in 0..steps {
        let tau = stiffness_torque(&state, reference, gains, arm)?;
        let total = [tau[0] + external[0], tau[1] + external[1]];
        for _ in 0..substeps {
            arm.integrate(&mut state, &total, h);
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShaperLimits {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for ShaperLimits {
    fn default() -> Self {
        Self { v_max: 1.0, a_max: 10.0 }
    }
}

impl ShaperLimits {
    /// Continuous trapezoid (or triangle) duration for a rest-to-rest move.
    pub fn move_time(&self, distance: f64) -> f64 {
        let d = distance.abs();
        if d * self.a_max >= self.v_max * self.v_max {
            self.v_max / self.a_max + d / self.v_max
        } else {
            2.0 * (d / self.a_max).sqrt()
        }
    }
}

fn shape_joint(q: f64, v: f64, target: f64, lim: &ShaperLimits, dt: f64) -> (f64, f64) {
    let e = target - q;
    let dv = lim.a_max * dt;
    // Largest speed from which repeated `dv` decrements stop within |e|.
    let brake = dv * ((0.25 + 2.0 * e.abs() / (dv * dt)).sqrt() - 0.5);
    let want = e.signum() * brake.min(lim.v_max).min(e.abs() / dt);
    let next_v = want.clamp(v - dv, v + dv);
    let step = next_v * dt;
    if (step - e).abs() <= 1e-12 {
        (target, next_v)
    } else {
        (q + step, next_v)
    }
}

/// Advances each joint setpoint one period toward `target` under velocity and
/// acceleration limits.
pub fn shape_command(
    current: &JointState,
    target: &[f64],
    limits: &ShaperLimits,
    dt: f64,
) -> Result<JointState, ManipError> {
    check(current.q.len(), target.len())?;
    check(current.q.len(), current.qd.len())?;
    let (q, qd) = current
        .q
        .iter()
        .zip(&current.qd)
        .zip(target)
        .map(|((&q, &v), &t)| shape_joint(q, v, t, limits, dt))
        .unzip();
    Ok(JointState { q, qd })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftState {
    pub height: f64,
    pub velocity: f64,
}

impl LiftState {
    pub fn new(height: f64) -> Self {
        Self {
            height: height.clamp(LIFT_MIN, LIFT_MAX),
            velocity: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftCommand {
    Velocity(f64),
    Height(f64),
}

impl Default for LiftCommand {
    fn default() -> Self {
        LiftCommand::Velocity(0.0)
    }
}

/// Kinematic self-locking lift.
pub fn lift_step(state: &LiftState, command: &LiftCommand, dt: f64) -> LiftState {
    let v = match *command {
        LiftCommand::Velocity(v) if v.is_finite() => v.clamp(-LIFT_SPEED_MAX, LIFT_SPEED_MAX),
        LiftCommand::Height(h) if h.is_finite() => {
            let goal = h.clamp(LIFT_MIN, LIFT_MAX);
            ((goal - state.height) / dt).clamp(-LIFT_SPEED_MAX, LIFT_SPEED_MAX)
        }
        _ => 0.0,
    };
    if v == 0.0 {
        return LiftState {
            height: state.height,
            velocity: 0.0,
        };
    }
    let height = (state.height + v * dt).clamp(LIFT_MIN, LIFT_MAX);
    let velocity = if height == state.height { 0.0 } else { v };
    LiftState { height, velocity }
}

/// Commanded base-frame EE pose keeping the world EE pose fixed.
pub fn ee_hold_target(world_base0: &Pose3, base_ee0: &Pose3, world_base_now: &Pose3) -> Pose3 {
    compose(&inverse(world_base_now), &compose(world_base0, base_ee0))
}

pub fn blend_factor(dt: f64, tau: f64) -> f64 {
    1.0 - (-dt / tau).exp()
}

/// Exponential low-pass on translation, slerp on rotation.
pub fn smooth_pose(prev: &Pose3, new: &Pose3, dt: f64, tau_trans: f64, tau_rot: f64) -> Pose3 {
    let at = blend_factor(dt, tau_trans);
    let ar = blend_factor(dt, tau_rot);
    Pose3::new(
        slerp(&prev.rotation, &new.rotation, ar),
        prev.translation + (new.translation - prev.translation) * at,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EeHoldParams {
    pub tau_trans: f64,
    pub tau_rot: f64,
    pub smoothing: bool,
}

impl Default for EeHoldParams {
    fn default() -> Self {
        Self {
            tau_trans: 0.20,
            tau_rot: 0.30,
            smoothing: true,
        }
    }
}

/// World-frame EE hold loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct EeHoldState {
    pub world_base0: Pose3,
    pub base_ee0: Pose3,
    pub last_command: Pose3,
    pub params: EeHoldParams,
}

impl EeHoldState {
    pub fn capture(world_base0: Pose3, base_ee0: Pose3, params: EeHoldParams) -> Self {
        assert!(params.tau_trans > 0.0 && params.tau_rot > 0.0);
        Self {
            world_base0,
            base_ee0,
            last_command: base_ee0,
            params,
        }
    }

    pub fn world_ee0(&self) -> Pose3 {
        compose(&self.world_base0, &self.base_ee0)
    }

    /// One hold update from the latest base pose available to the loop.
    pub fn step(&mut self, world_base: &Pose3, dt: f64) -> Pose3 {
        let raw = ee_hold_target(&self.world_base0, &self.base_ee0, world_base);
        self.last_command = if self.params.smoothing {
            smooth_pose(&self.last_command, &raw, dt, self.params.tau_trans, self.params.tau_rot)
        } else {
            raw
        };
        self.last_command
    }
}
