//! Rigid-body transforms shared by the whole stack.
//!
//! Frames are right-handed with `+Y` up; the ground plane is X–Z. A planar
//! heading `ψ = 0` faces `+Z` and `ψ = π/2` faces `+X`, i.e. yaw is a
//! right-handed rotation about `+Y`. In the robot body frame `+Z` is forward,
//! `+X` is left and `+Y` is up. Planar twists use the conventional
//! forward/left/counter-clockwise components.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Wraps an angle into `(−π, π]`. Ties at `±π` map to `+π`.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Rotation + translation in 3D. Maps points of the child frame into the
/// parent frame: `p_parent = R · p_child + t`.
#[derive(Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Pose3 {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    /// Pure rotation about the vertical axis.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::new(yaw_quaternion(yaw), Vector3::zeros())
    }

    /// Lifts a planar pose to 3D at the given height above the ground plane.
    pub fn from_pose2(pose: Pose2, height: f64) -> Self {
        Self::new(yaw_quaternion(pose.yaw), Vector3::new(pose.x, height, pose.z))
    }

    /// Planar projection: drops height, roll and pitch.
    pub fn to_pose2(&self) -> Pose2 {
        Pose2::new(self.translation.x, self.translation.z, self.yaw())
    }

    /// Heading of the body `+Z` axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        let f = self.rotation * Vector3::z();
        f.x.atan2(f.z)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose3) -> Pose3 {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose3 {
        inverse(self)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Wire order `[qx, qy, qz, qw, x, y, z]`.
    pub fn to_wire(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        let t = &self.translation;
        [q.i, q.j, q.k, q.w, t.x, t.y, t.z]
    }

    /// Inverse of [`Pose3::to_wire`]. The quaternion is renormalized; a zero
    /// or non-finite quaternion is rejected.
    pub fn from_wire(w: [f64; 7]) -> Option<Pose3> {
        if w.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let q = Quaternion::new(w[3], w[0], w[1], w[2]);
        if q.norm() < 1e-12 {
            return None;
        }
        Some(Pose3::new(
            UnitQuaternion::from_quaternion(q),
            Vector3::new(w[4], w[5], w[6]),
        ))
    }

    pub fn translation_distance(&self, other: &Pose3) -> f64 {
        (self.translation - other.translation).norm()
    }
}

impl Default for Pose3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for Pose3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        let t = &self.translation;
        write!(
            f,
            "Pose3(q=[w {:.6}, x {:.6}, y {:.6}, z {:.6}], t=[{:.6}, {:.6}, {:.6}])",
            q.w, q.i, q.j, q.k, t.x, t.y, t.z
        )
    }
}

impl Serialize for Pose3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_wire().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = <[f64; 7]>::deserialize(d)?;
        Pose3::from_wire(w).ok_or_else(|| D::Error::custom("invalid pose quaternion"))
    }
}

pub fn yaw_quaternion(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw)
}

pub fn compose(a: &Pose3, b: &Pose3) -> Pose3 {
    Pose3 {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn inverse(p: &Pose3) -> Pose3 {
    let r_inv = p.rotation.inverse();
    Pose3 {
        rotation: r_inv,
        translation: -(r_inv * p.translation),
    }
}

/// Spherical linear interpolation along the shortest arc.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let a = q0.quaternion();
    let mut b = *q1.quaternion();
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        // Nearly parallel: normalized lerp is exact to rounding.
        return UnitQuaternion::from_quaternion(a * (1.0 - t) + b * t);
    }
    let theta = dot.min(1.0).acos();
    let s = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / s;
    let wb = (t * theta).sin() / s;
    UnitQuaternion::from_quaternion(a * wa + b * wb)
}

/// Planar pose on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, z: f64, yaw: f64) -> Self {
        Self {
            x,
            z,
            yaw: normalize_angle(yaw),
        }
    }

    /// Unit vector of the robot's forward axis in world `(x, z)`.
    pub fn forward(&self) -> (f64, f64) {
        (self.yaw.sin(), self.yaw.cos())
    }

    /// Unit vector of the robot's left axis in world `(x, z)`.
    pub fn left(&self) -> (f64, f64) {
        (self.yaw.cos(), -self.yaw.sin())
    }

    /// Expresses a world-frame planar vector in the robot frame as `(forward, left)`.
    pub fn world_to_robot(&self, wx: f64, wz: f64) -> (f64, f64) {
        let (fx, fz) = self.forward();
        let (lx, lz) = self.left();
        (wx * fx + wz * fz, wx * lx + wz * lz)
    }

    /// Inverse of [`Pose2::world_to_robot`].
    pub fn robot_to_world(&self, forward: f64, left: f64) -> (f64, f64) {
        let (fx, fz) = self.forward();
        let (lx, lz) = self.left();
        (forward * fx + left * lx, forward * fz + left * lz)
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }

    /// Pose reached by applying `delta` (expressed in this pose's frame).
    pub fn compose(&self, delta: &Pose2) -> Pose2 {
        let (dx, dz) = self.robot_to_world(delta.z, delta.x);
        Pose2::new(self.x + dx, self.z + dz, self.yaw + delta.yaw)
    }

    /// Increment `d` such that `self.compose(d) == other`, as a pose in the
    /// frame of `self` (x = left, z = forward).
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let (f, l) = self.world_to_robot(other.x - self.x, other.z - self.z);
        Pose2::new(l, f, other.yaw - self.yaw)
    }
}

/// Planar chassis velocity in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2 {
    /// Forward, m/s.
    pub vx: f64,
    /// Left, m/s.
    pub vy: f64,
    /// Counter-clockwise seen from above, rad/s.
    pub omega: f64,
}

impl Twist2 {
    pub const ZERO: Twist2 = Twist2 {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn linear_speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.omega == 0.0
    }
}
