//! Base tracking controllers: velocity smoothing, position/yaw PID,
//! holonomic pure pursuit and the two-stage docking sequence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{normalize_angle, Pose2, Twist2};
use crate::planner::Waypoints;
use crate::swerve::{clamp_twist, VelocityLimits};

/// Control period of the base controllers, seconds.
pub const CONTROL_PERIOD: f64 = 1.0 / 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("no path")]
    NoPath,
    #[error("dock stage {stage:?} timed out after {elapsed:.2} s (dx {dx:.4}, dz {dz:.4}, yaw {yaw_error:.4})")]
    DockTimeout {
        stage: DockStage,
        elapsed: f64,
        dx: f64,
        dz: f64,
        yaw_error: f64,
    },
}

/// Exponential moving average on twists:
/// `v_filt(t) = (1 − α)·v_cmd(t) + α·v_filt(t − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaFilterState {
    pub alpha: f64,
    pub previous: Twist2,
}

impl EmaFilterState {
    pub fn new(alpha: f64) -> Self {
        assert!((0.0..1.0).contains(&alpha), "EMA alpha must lie in [0, 1)");
        Self {
            alpha,
            previous: Twist2::ZERO,
        }
    }

    pub fn reset(&mut self) {
        self.previous = Twist2::ZERO;
    }
}

impl Default for EmaFilterState {
    fn default() -> Self {
        Self::new(0.2)
    }
}

pub fn ema_step(state: &mut EmaFilterState, cmd: &Twist2) -> Twist2 {
    let a = state.alpha;
    let p = state.previous;
    let blend = |prev: f64, c: f64| (c + a * (prev - c)).clamp(prev.min(c), prev.max(c));
    let out = Twist2::new(blend(p.vx, cmd.vx), blend(p.vy, cmd.vy), blend(p.omega, cmd.omega));
    state.previous = out;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub pos_kp: f64,
    pub pos_ki: f64,
    pub pos_kd: f64,
    pub yaw_kp: f64,
    pub yaw_ki: f64,
    pub yaw_kd: f64,
    pub pos_tolerance: f64,
    pub yaw_tolerance: f64,
    /// m·s
    pub pos_integral_clamp: f64,
    /// rad·s
    pub yaw_integral_clamp: f64,
    /// Internal saturation before the safety clamp.
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            pos_kp: 1.5,
            pos_ki: 0.02,
            pos_kd: 0.15,
            yaw_kp: 2.1,
            yaw_ki: 0.01,
            yaw_kd: 0.2,
            pos_tolerance: 0.015,
            yaw_tolerance: 0.03,
            pos_integral_clamp: 0.5,
            yaw_integral_clamp: 0.5,
            v_max: 0.35,
            omega_max: 1.0,
        }
    }
}

/// Integral and derivative memory of the pose PID.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidMemory {
    /// World-frame position error integral (x, z).
    pub integral: (f64, f64),
    pub yaw_integral: f64,
    previous: Option<Pose2>,
}

impl PidMemory {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    pub twist: Twist2,
    pub done: bool,
    pub position_error: f64,
    pub yaw_error: f64,
}

/// One step of the pose PID. Errors are formed in the world frame, the
/// derivative acts on the measurement, and the resulting world velocity is
/// rotated into the robot frame. The integral used for the output is the one
/// accumulated up to the previous step.
pub fn pid_step(
    est: &Pose2,
    target: &Pose2,
    gains: &PidGains,
    limits: &VelocityLimits,
    dt: f64,
    mem: &mut PidMemory,
) -> PidOutput {
    assert!(dt > 0.0, "pid_step requires dt > 0");
    let ex = target.x - est.x;
    let ez = target.z - est.z;
    let eyaw = normalize_angle(target.yaw - est.yaw);

    let (dx, dz, dyaw) = match mem.previous {
        Some(p) => (
            (est.x - p.x) / dt,
            (est.z - p.z) / dt,
            normalize_angle(est.yaw - p.yaw) / dt,
        ),
        None => (0.0, 0.0, 0.0),
    };

    let ux = gains.pos_kp * ex + gains.pos_ki * mem.integral.0 - gains.pos_kd * dx;
    let uz = gains.pos_kp * ez + gains.pos_ki * mem.integral.1 - gains.pos_kd * dz;
    let uw = gains.yaw_kp * eyaw + gains.yaw_ki * mem.yaw_integral - gains.yaw_kd * dyaw;

    let (fwd, left) = est.world_to_robot(ux, uz);
    let raw = Twist2::new(fwd, left, uw);
    let saturated = clamp_twist(
        &raw,
        &VelocityLimits {
            v_max: gains.v_max,
            omega_max: gains.omega_max,
            ..*limits
        },
    );
    let twist = clamp_twist(&saturated, limits);

    // Conditional integration: only accumulate while the axis is unsaturated.
    let pos_clamp = gains.pos_integral_clamp;
    if raw.linear_speed() <= limits.v_max.min(gains.v_max) {
        mem.integral.0 = (mem.integral.0 + ex * dt).clamp(-pos_clamp, pos_clamp);
        mem.integral.1 = (mem.integral.1 + ez * dt).clamp(-pos_clamp, pos_clamp);
    }
    if uw.abs() <= limits.omega_max.min(gains.omega_max) {
        let c = gains.yaw_integral_clamp;
        mem.yaw_integral = (mem.yaw_integral + eyaw * dt).clamp(-c, c);
    }
    mem.previous = Some(*est);

    let position_error = ex.hypot(ez);
    PidOutput {
        twist,
        done: position_error <= gains.pos_tolerance && eyaw.abs() <= gains.yaw_tolerance,
        position_error,
        yaw_error: eyaw,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PursuitParams {
    pub lookahead_min: f64,
    pub lookahead_max: f64,
    pub cruise_speed: f64,
    pub goal_tolerance: f64,
    /// Proportional gain used to slow down once the look-ahead point is the
    /// final waypoint.
    pub approach_gain: f64,
}

impl Default for PursuitParams {
    fn default() -> Self {
        Self {
            lookahead_min: 0.2,
            lookahead_max: 0.4,
            cruise_speed: 0.25,
            goal_tolerance: 0.02,
            approach_gain: 1.5,
        }
    }
}

impl PursuitParams {
    /// Look-ahead distance, linear in speed over `[lookahead_min, lookahead_max]`.
    pub fn lookahead(&self, current_speed: f64) -> f64 {
        let ratio = (current_speed.abs() / self.cruise_speed).clamp(0.0, 1.0);
        self.lookahead_min + (self.lookahead_max - self.lookahead_min) * ratio
    }
}

/// Tracker memory: progress along the path only moves forward.
#[derive(Debug, Clone, Default)]
pub struct PursuitState {
    segment: usize,
    heading: AxisPid,
}

impl PursuitState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn segment(&self) -> usize {
        self.segment
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PursuitOutput {
    pub twist: Twist2,
    pub done: bool,
    /// World-frame look-ahead point `(x, z)`.
    pub lookahead_point: (f64, f64),
    pub lookahead_distance: f64,
}

/// Single-axis PID with derivative on measurement and a clamped integral.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct AxisPid {
    integral: f64,
    previous: Option<f64>,
}

impl AxisPid {
    fn angular_step(&mut self, kp: f64, ki: f64, kd: f64, clamp: f64, error: f64, meas: f64, dt: f64) -> f64 {
        let d = match self.previous {
            Some(p) => normalize_angle(meas - p) / dt,
            None => 0.0,
        };
        let out = kp * error + ki * self.integral - kd * d;
        self.integral = (self.integral + error * dt).clamp(-clamp, clamp);
        self.previous = Some(meas);
        out
    }
}

/// Holonomic pure pursuit: translate toward a look-ahead point on the path
/// while a heading PID turns the robot to face the path tangent.
pub fn pursuit_step(
    est: &Pose2,
    path: &Waypoints,
    params: &PursuitParams,
    gains: &PidGains,
    limits: &VelocityLimits,
    current_speed: f64,
    dt: f64,
    state: &mut PursuitState,
) -> Result<PursuitOutput, ControlError> {
    let pts = &path.points;
    let Some(&goal) = pts.last() else {
        return Err(ControlError::NoPath);
    };
    let lookahead = params.lookahead(current_speed);
    let dist_goal = (goal.0 - est.x).hypot(goal.1 - est.z);
    if dist_goal <= params.goal_tolerance {
        return Ok(PursuitOutput {
            twist: Twist2::ZERO,
            done: true,
            lookahead_point: goal,
            lookahead_distance: lookahead,
        });
    }

    // Closest point, searching forward from the current segment.
    let n_seg = pts.len().saturating_sub(1);
    let mut best = (state.segment.min(n_seg.saturating_sub(1)), 0.0, f64::INFINITY);
    for i in state.segment..n_seg {
        let (t, d) = project_on_segment(pts[i], pts[i + 1], (est.x, est.z));
        if d < best.2 - 1e-12 {
            best = (i, t, d);
        }
    }
    state.segment = best.0;

    // Walk `lookahead` metres of arc length forward from the projection.
    let (mut target, mut tangent, mut reached_end) = (goal, None, true);
    if n_seg > 0 {
        let mut remaining = lookahead;
        let mut i = best.0;
        let mut t = best.1;
        while i < n_seg {
            let (a, b) = (pts[i], pts[i + 1]);
            let seg_len = (b.0 - a.0).hypot(b.1 - a.1);
            let left_on_seg = seg_len * (1.0 - t);
            if seg_len > 0.0 {
                tangent = Some((b.0 - a.0, b.1 - a.1));
            }
            if left_on_seg >= remaining && seg_len > 0.0 {
                let s = t + remaining / seg_len;
                target = (a.0 + (b.0 - a.0) * s, a.1 + (b.1 - a.1) * s);
                reached_end = false;
                break;
            }
            remaining -= left_on_seg;
            i += 1;
            t = 0.0;
        }
    }

    let (wx, wz) = (target.0 - est.x, target.1 - est.z);
    let dist_target = wx.hypot(wz);
    let mut speed = params.cruise_speed;
    if reached_end {
        speed = speed.min(params.approach_gain * dist_goal);
    }
    let (fwd, left) = est.world_to_robot(wx, wz);
    let (vx, vy) = if dist_target > 1e-12 {
        (fwd / dist_target * speed, left / dist_target * speed)
    } else {
        (0.0, 0.0)
    };

    let omega = match tangent {
        Some((tx, tz)) => {
            let desired = tx.atan2(tz);
            let err = normalize_angle(desired - est.yaw);
            state.heading.angular_step(
                gains.yaw_kp,
                gains.yaw_ki,
                gains.yaw_kd,
                gains.yaw_integral_clamp,
                err,
                est.yaw,
                dt,
            )
        }
        None => 0.0,
    };

    let twist = clamp_twist(
        &clamp_twist(
            &Twist2::new(vx, vy, omega),
            &VelocityLimits {
                v_max: gains.v_max,
                omega_max: gains.omega_max,
                ..*limits
            },
        ),
        limits,
    );
    Ok(PursuitOutput {
        twist,
        done: false,
        lookahead_point: target,
        lookahead_distance: lookahead,
    })
}

/// Parameter `t ∈ [0, 1]` of the closest point on `a→b` and the distance to it.
fn project_on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> (f64, f64) {
    let (dx, dz) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dz * dz;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cz) = (a.0 + dx * t, a.1 + dz * t);
    (t, (p.0 - cx).hypot(p.1 - cz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DockStage {
    MoveTo,
    Align,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DockParams {
    pub position_tolerance: f64,
    pub heading_tolerance: f64,
    /// Per-stage limit, simulated seconds.
    pub timeout: f64,
    /// A stage only completes once both the commanded and the observed
    /// motion have decayed below these magnitudes.
    pub settle_speed: f64,
    pub settle_omega: f64,
}

impl Default for DockParams {
    fn default() -> Self {
        Self {
            position_tolerance: 0.02,
            heading_tolerance: 0.04,
            timeout: 30.0,
            settle_speed: 0.005,
            settle_omega: 0.01,
        }
    }
}

/// Residual of the docked pose against HOME, in the estimate's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DockReport {
    pub dx: f64,
    pub dz: f64,
    pub yaw_error: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DockCommand {
    pub twist: Twist2,
    pub stage: DockStage,
    pub report: Option<DockReport>,
}

/// Two-stage docking: absolute move to `(x, z, ψ)` inside the translational
/// tolerance, then in-place heading alignment.
#[derive(Debug, Clone)]
pub struct Docker {
    pub home: Pose2,
    pub params: DockParams,
    stage: DockStage,
    stage_elapsed: f64,
    elapsed: f64,
    memory: PidMemory,
    last: Option<Pose2>,
}

impl Docker {
    pub fn new(home: Pose2, params: DockParams) -> Self {
        Self {
            home,
            params,
            stage: DockStage::MoveTo,
            stage_elapsed: 0.0,
            elapsed: 0.0,
            memory: PidMemory::default(),
            last: None,
        }
    }

    pub fn stage(&self) -> DockStage {
        self.stage
    }

    pub fn step(
        &mut self,
        est: &Pose2,
        gains: &PidGains,
        limits: &VelocityLimits,
        dt: f64,
    ) -> Result<DockCommand, ControlError> {
        self.elapsed += dt;
        self.stage_elapsed += dt;
        let (speed, omega) = match self.last.replace(*est) {
            Some(p) => (p.distance(est) / dt, normalize_angle(est.yaw - p.yaw).abs() / dt),
            None => (f64::INFINITY, f64::INFINITY),
        };
        if self.stage == DockStage::MoveTo {
            let out = pid_step(est, &self.home, gains, limits, dt, &mut self.memory);
            let settled = out.twist.linear_speed() <= self.params.settle_speed && speed <= self.params.settle_speed;
            if out.position_error <= self.params.position_tolerance && settled {
                self.stage = DockStage::Align;
                self.stage_elapsed = 0.0;
                self.memory.reset();
            } else {
                self.check_timeout(est)?;
                return Ok(DockCommand {
                    twist: out.twist,
                    stage: DockStage::MoveTo,
                    report: None,
                });
            }
        }
        if self.stage == DockStage::Align {
            // Heading only: the translational target is the current estimate.
            let target = Pose2::new(est.x, est.z, self.home.yaw);
            let out = pid_step(est, &target, gains, limits, dt, &mut self.memory);
            let twist = Twist2::new(0.0, 0.0, out.twist.omega);
            let settled = twist.omega.abs() <= self.params.settle_omega && omega <= self.params.settle_omega;
            if out.yaw_error.abs() <= self.params.heading_tolerance && settled {
                self.stage = DockStage::Done;
            } else {
                self.check_timeout(est)?;
                return Ok(DockCommand {
                    twist,
                    stage: DockStage::Align,
                    report: None,
                });
            }
        }
        Ok(DockCommand {
            twist: Twist2::ZERO,
            stage: DockStage::Done,
            report: Some(self.report(est)),
        })
    }

    fn report(&self, est: &Pose2) -> DockReport {
        DockReport {
            dx: est.x - self.home.x,
            dz: est.z - self.home.z,
            yaw_error: normalize_angle(est.yaw - self.home.yaw),
            elapsed: self.elapsed,
        }
    }

    fn check_timeout(&self, est: &Pose2) -> Result<(), ControlError> {
        if self.stage_elapsed > self.params.timeout {
            let r = self.report(est);
            return Err(ControlError::DockTimeout {
                stage: self.stage,
                elapsed: self.stage_elapsed,
                dx: r.dx,
                dz: r.dz,
                yaw_error: r.yaw_error,
            });
        }
        Ok(())
    }
}
