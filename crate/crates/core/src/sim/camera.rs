//! Pinhole depth camera rendered by ray casting against the floor, boxes and
//! walker capsules.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::frames::{Pose2, Pose3};
use crate::mapping::PointCloud;

use super::scene::{BoxObstacle, WalkerScript};

/// Optical frame: `x` right, `y` down, `z` along the viewing axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub max_range: f64,
    /// Depth noise standard deviation per meter of depth.
    pub noise_per_meter: f64,
    /// Mount above the lift top.
    pub mount_height: f64,
    pub mount_forward: f64,
    /// Downward tilt of the optical axis, radians.
    pub pitch: f64,
    /// Fraction of pixels still returned while occluded.
    pub occluded_fraction: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            fx: 80.0,
            fy: 80.0,
            cx: 80.0,
            cy: 60.0,
            max_range: 8.0,
            noise_per_meter: 0.01,
            mount_height: 0.2,
            mount_forward: 0.1,
            pitch: 0.38,
            occluded_fraction: 0.1,
        }
    }
}

impl CameraModel {
    /// Optical frame relative to the base frame (`+Z` forward, `+X` left).
    pub fn mount(&self, lift_height: f64) -> Pose3 {
        let flip = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);
        let tilt = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.pitch);
        Pose3::new(
            tilt * flip,
            Vector3::new(0.0, lift_height + self.mount_height, self.mount_forward),
        )
    }

    pub fn world_pose(&self, base: &Pose2, lift_height: f64) -> Pose3 {
        Pose3::from_pose2(*base, 0.0).compose(&self.mount(lift_height))
    }

    /// Unnormalized ray for a pixel center, with unit `z` component.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Renderable geometry snapshot.
pub struct DepthScene<'a> {
    pub boxes: &'a [BoxObstacle],
    /// Walkers with their current planar positions.
    pub walkers: Vec<(&'a WalkerScript, [f64; 2])>,
}

fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, b: &BoxObstacle) -> Option<f64> {
    let lo = [b.min[0], 0.0, b.min[1]];
    let hi = [b.max[0], b.height, b.max[1]];
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (mut ta, mut tb) = ((lo[a] - o[a]) * inv, (hi[a] - o[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

fn ray_sphere(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.dot(d);
    let b = oc.dot(d);
    let cc = oc.dot(&oc) - r * r;
    let disc = b * b - a * cc;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t > 0.0).then_some(t)
}

/// Vertical capsule standing on the floor.
fn ray_capsule(o: &Vector3<f64>, d: &Vector3<f64>, w: &WalkerScript, at: [f64; 2]) -> Option<f64> {
    let r = w.radius;
    let y0 = r;
    let y1 = (w.height - r).max(r);
    let mut best: Option<f64> = None;
    let mut take = |t: Option<f64>| {
        if let Some(t) = t {
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    };
    let (ox, oz) = (o.x - at[0], o.z - at[1]);
    let a = d.x * d.x + d.z * d.z;
    if a > 1e-15 {
        let b = ox * d.x + oz * d.z;
        let c = ox * ox + oz * oz - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / a;
            let y = o.y + t * d.y;
            if t > 0.0 && y >= y0 && y <= y1 {
                take(Some(t));
            }
        }
    }
    take(ray_sphere(o, d, &Vector3::new(at[0], y0, at[1]), r));
    take(ray_sphere(o, d, &Vector3::new(at[0], y1, at[1]), r));
    best
}

/// Nearest hit parameter along `o + t·d`.
pub fn cast(o: &Vector3<f64>, d: &Vector3<f64>, scene: &DepthScene) -> Option<f64> {
    let mut best = if d.y < 0.0 && o.y > 0.0 { Some(-o.y / d.y) } else { None };
    let mut take = |t: Option<f64>| {
        if let Some(t) = t {
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    };
    for b in scene.boxes {
        take(ray_box(o, d, b));
    }
    for (w, at) in &scene.walkers {
        take(ray_capsule(o, d, w, *at));
    }
    best
}

/// Renders a sensor-frame cloud. With `occluded`, only every
/// `1/occluded_fraction`-th pixel is kept.
pub fn render_depth<R: Rng>(
    cam: &CameraModel,
    cam_pose: &Pose3,
    scene: &DepthScene,
    occluded: bool,
    timestamp: f64,
    rng: &mut R,
) -> PointCloud {
    let stride = if occluded {
        (1.0 / cam.occluded_fraction.clamp(1e-6, 1.0)).ceil() as usize
    } else {
        1
    };
    let origin = cam_pose.translation;
    let mut points = Vec::new();
    let mut pixel = 0usize;
    for v in 0..cam.height {
        for u in 0..cam.width {
            pixel += 1;
            if (pixel - 1) % stride != 0 {
                continue;
            }
            let ray = cam.pixel_ray(u, v);
            let dir = cam_pose.rotation * ray;
            let Some(depth) = cast(&origin, &dir, scene) else {
                continue;
            };
            if depth > cam.max_range {
                continue;
            }
            let sigma = cam.noise_per_meter * depth;
            let noisy = if sigma > 0.0 {
                depth + Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
            } else {
                depth
            };
            let p = ray * noisy;
            points.push([p.x, p.y, p.z]);
        }
    }
    PointCloud::new(points, timestamp)
}
