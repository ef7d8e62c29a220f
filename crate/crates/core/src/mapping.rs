//! Point-cloud integration, floor estimation, occupancy projection and cost
//! map generation.
//!
//! Heights are world `+Y`. Grids index columns along world `x` and rows along
//! world `z`, row-major.

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{Pose2, Pose3};

pub const LETHAL: u8 = 255;
pub const MAX_SOFT_COST: u8 = 254;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("cost map geometry mismatch")]
    GeometryMismatch,
    #[error("malformed {what} payload: {reason}")]
    Malformed { what: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingParams {
    pub voxel_size: f64,
    pub outlier_radius: f64,
    pub outlier_neighbors: usize,
    /// Band above the 5th-percentile height averaged into the floor estimate.
    pub floor_band: f64,
    /// Weight of a new floor sample in the temporal EMA.
    pub floor_alpha: f64,
    pub cell_size: f64,
    /// Voxels up to this height above the floor count as floor.
    pub occupancy_floor_band: f64,
    /// Voxels above this height over the floor are overhangs and ignored.
    pub robot_height: f64,
    pub inflation_radius: f64,
    pub soft_band: f64,
    /// Local/global blend factor.
    pub fuse_lambda: f64,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.02,
            outlier_radius: 0.12,
            outlier_neighbors: 3,
            floor_band: 0.1,
            floor_alpha: 0.2,
            cell_size: 0.05,
            occupancy_floor_band: 0.25,
            robot_height: 1.5,
            inflation_radius: 0.3,
            soft_band: 0.2,
            fuse_lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub timestamp: f64,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, timestamp: f64) -> Self {
        Self { points, timestamp }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose3) -> PointCloud {
        let points = self
            .points
            .iter()
            .map(|p| {
                let q = pose.transform_point(&Vector3::new(p[0], p[1], p[2]));
                [q.x, q.y, q.z]
            })
            .collect();
        PointCloud::new(points, self.timestamp)
    }

    /// Wire layout: `u32` count, then `count × 3` little-endian `f32`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.points.len() * 12);
        out.extend_from_slice(&(self.points.len() as u32).to_le_bytes());
        for p in &self.points {
            for c in p {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], timestamp: f64) -> Result<PointCloud, MapError> {
        let malformed = |reason: &str| MapError::Malformed {
            what: "cloud",
            reason: reason.to_string(),
        };
        let head: [u8; 4] = bytes
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| malformed("missing count"))?;
        let n = u32::from_le_bytes(head) as usize;
        let body = &bytes[4..];
        if body.len() != n * 12 {
            return Err(malformed("length does not match count"));
        }
        let points = body
            .chunks_exact(12)
            .map(|c| {
                let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().unwrap()) as f64;
                [f(0), f(4), f(8)]
            })
            .collect();
        Ok(PointCloud::new(points, timestamp))
    }
}

type Key3 = (i64, i64, i64);

fn key_of(p: &[f64; 3], size: f64) -> Key3 {
    (
        (p[0] / size).floor() as i64,
        (p[1] / size).floor() as i64,
        (p[2] / size).floor() as i64,
    )
}

/// Keeps exactly the points that have at least `min_neighbors` other points
/// within `radius` (inclusive). Input order is preserved.
pub fn reject_outliers(cloud: &PointCloud, radius: f64, min_neighbors: usize) -> PointCloud {
    if min_neighbors == 0 {
        return cloud.clone();
    }
    let mut buckets: HashMap<Key3, Vec<usize>> = HashMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        buckets.entry(key_of(p, radius)).or_default().push(i);
    }
    let r2 = radius * radius;
    let keep = cloud
        .points
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            let k = key_of(p, radius);
            let mut count = 0usize;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(ids) = buckets.get(&(k.0 + dx, k.1 + dy, k.2 + dz)) else {
                            continue;
                        };
                        for &j in ids {
                            if j == *i {
                                continue;
                            }
                            let q = &cloud.points[j];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                            if d2 <= r2 {
                                count += 1;
                                if count >= min_neighbors {
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
            false
        })
        .map(|(_, p)| *p)
        .collect();
    PointCloud::new(keep, cloud.timestamp)
}

/// One representative (the first point seen) per voxel.
pub fn voxel_downsample(cloud: &PointCloud, size: f64) -> PointCloud {
    let mut seen = std::collections::HashSet::new();
    let points = cloud
        .points
        .iter()
        .filter(|p| seen.insert(key_of(p, size)))
        .copied()
        .collect();
    PointCloud::new(points, cloud.timestamp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorEstimate {
    /// Smoothed floor height; `None` until the first non-empty cloud.
    pub height: Option<f64>,
    pub alpha: f64,
    pub band: f64,
    /// Set when the last update had no points to work with.
    pub stale: bool,
}

impl FloorEstimate {
    pub fn new(alpha: f64, band: f64) -> Self {
        assert!(band > 0.0);
        Self {
            height: None,
            alpha,
            band,
            stale: false,
        }
    }

    pub fn height_or(&self, fallback: f64) -> f64 {
        self.height.unwrap_or(fallback)
    }
}

/// Instantaneous floor: mean height of the points lying in
/// `[p5, p5 + band]`, where `p5` is the nearest-rank 5th percentile.
pub fn instantaneous_floor(cloud: &PointCloud, band: f64) -> Option<f64> {
    if cloud.is_empty() {
        return None;
    }
    let mut ys: Vec<f64> = cloud.points.iter().map(|p| p[1]).collect();
    ys.sort_by(f64::total_cmp);
    let rank = ((0.05 * ys.len() as f64).ceil() as usize).max(1) - 1;
    let p5 = ys[rank];
    let (sum, n) = ys
        .iter()
        .filter(|&&y| y >= p5 && y <= p5 + band)
        .fold((0.0, 0usize), |(s, n), y| (s + y, n + 1));
    Some(sum / n as f64)
}

/// World-frame cloud in, updated estimate out. The EMA weights the new
/// sample by `alpha`; the first sample initializes the estimate.
pub fn estimate_floor(cloud: &PointCloud, state: &FloorEstimate) -> FloorEstimate {
    let mut next = *state;
    match instantaneous_floor(cloud, state.band) {
        None => next.stale = true,
        Some(inst) => {
            next.stale = false;
            next.height = Some(match state.height {
                None => inst,
                Some(prev) => state.alpha * inst + (1.0 - state.alpha) * prev,
            });
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseQuality {
    Good,
    Degraded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub hits: u32,
    pub representative: [f64; 3],
}

/// Sparse world-frame voxel set with hit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMap {
    voxel_size: f64,
    voxels: BTreeMap<Key3, Voxel>,
}

impl VoxelMap {
    pub fn new(voxel_size: f64) -> Self {
        assert!(voxel_size > 0.0);
        Self {
            voxel_size,
            voxels: BTreeMap::new(),
        }
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn get(&self, key: (i64, i64, i64)) -> Option<&Voxel> {
        self.voxels.get(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(i64, i64, i64), &Voxel)> {
        self.voxels.iter()
    }

    pub fn key(&self, p: &[f64; 3]) -> (i64, i64, i64) {
        key_of(p, self.voxel_size)
    }

    pub fn center(&self, key: &(i64, i64, i64)) -> [f64; 3] {
        let s = self.voxel_size;
        [
            (key.0 as f64 + 0.5) * s,
            (key.1 as f64 + 0.5) * s,
            (key.2 as f64 + 0.5) * s,
        ]
    }

    /// Adds a world-frame point directly.
    pub fn insert_point(&mut self, p: [f64; 3]) {
        let k = self.key(&p);
        self.voxels
            .entry(k)
            .and_modify(|v| v.hits += 1)
            .or_insert(Voxel {
                hits: 1,
                representative: p,
            });
    }
}

/// Transforms a sensor-frame cloud by `sensor_pose` and accumulates it.
/// Degraded pose quality leaves the map untouched.
pub fn integrate_cloud(map: &mut VoxelMap, cloud: &PointCloud, sensor_pose: &Pose3, quality: PoseQuality) {
    if quality == PoseQuality::Degraded {
        return;
    }
    for p in &cloud.points {
        let w = sensor_pose.transform_point(&Vector3::new(p[0], p[1], p[2]));
        map.insert_point([w.x, w.y, w.z]);
    }
}

/// Axis-aligned 2D grid placement. Only the translation of `origin` is used;
/// grids are aligned with world `x` (columns) and `z` (rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: Pose2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(origin_x: f64, origin_z: f64, cell_size: f64, width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0 && cell_size > 0.0);
        Self {
            origin: Pose2::new(origin_x, origin_z, 0.0),
            cell_size,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn cell_of_index(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    /// `(col, row)` containing the world point, if inside the grid.
    pub fn world_to_cell(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin.x) / self.cell_size).floor();
        let r = ((z - self.origin.z) / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.z + (row as f64 + 0.5) * self.cell_size,
        )
    }

    fn same_as(&self, other: &GridGeometry) -> bool {
        self.width == other.width
            && self.height == other.height
            && (self.cell_size - other.cell_size).abs() < 1e-12
            && (self.origin.x - other.origin.x).abs() < 1e-9
            && (self.origin.z - other.origin.z).abs() < 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub geometry: GridGeometry,
    pub cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            cells: vec![CellState::Unknown; geometry.len()],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> CellState {
        self.cells[self.geometry.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, s: CellState) {
        let i = self.geometry.index(col, row);
        self.cells[i] = s;
    }
}

/// Projects voxels onto the grid. Heights are voxel centers relative to the
/// floor: up to `occupancy_floor_band` is floor (observed, free), up to
/// `robot_height` is an obstacle, anything higher is ignored.
pub fn project_occupancy(
    map: &VoxelMap,
    floor: f64,
    occupancy_floor_band: f64,
    robot_height: f64,
    geometry: GridGeometry,
) -> OccupancyGrid {
    let mut grid = OccupancyGrid::new(geometry);
    for (key, _) in map.iter() {
        let c = map.center(key);
        let rel = c[1] - floor;
        if rel > robot_height {
            continue;
        }
        let Some((col, row)) = geometry.world_to_cell(c[0], c[2]) else {
            continue;
        };
        let i = geometry.index(col, row);
        if rel > occupancy_floor_band {
            grid.cells[i] = CellState::Occupied;
        } else if grid.cells[i] == CellState::Unknown {
            grid.cells[i] = CellState::Free;
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub geometry: GridGeometry,
    pub costs: Vec<u8>,
    /// Cells never observed; they carry cost 0 unless inflated.
    pub unknown: Vec<bool>,
}

impl CostMap {
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            costs: vec![0; geometry.len()],
            unknown: vec![false; geometry.len()],
        }
    }

    pub fn cost(&self, col: usize, row: usize) -> u8 {
        self.costs[self.geometry.index(col, row)]
    }

    pub fn is_lethal(&self, col: usize, row: usize) -> bool {
        self.cost(col, row) == LETHAL
    }

    pub fn set_cost(&mut self, col: usize, row: usize, c: u8) {
        let i = self.geometry.index(col, row);
        self.costs[i] = c;
    }

    /// Wire layout, little-endian: origin `x, z, ψ` (`f64`), cell size
    /// (`f64`), width, height (`u32`), then row-major cost bytes.
    pub fn encode(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(40 + self.costs.len());
        for v in [g.origin.x, g.origin.z, g.origin.yaw, g.cell_size] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(g.width as u32).to_le_bytes());
        out.extend_from_slice(&(g.height as u32).to_le_bytes());
        out.extend_from_slice(&self.costs);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<CostMap, MapError> {
        let malformed = |reason: &str| MapError::Malformed {
            what: "costmap",
            reason: reason.to_string(),
        };
        if bytes.len() < 40 {
            return Err(malformed("short header"));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (w, h, cell) = (u(32), u(36), f(24));
        if w == 0 || h == 0 || !(cell > 0.0) {
            return Err(malformed("bad dimensions"));
        }
        if bytes.len() != 40 + w * h {
            return Err(malformed("length does not match dimensions"));
        }
        let geometry = GridGeometry {
            origin: Pose2::new(f(0), f(8), f(16)),
            cell_size: cell,
            width: w,
            height: h,
        };
        Ok(CostMap {
            geometry,
            costs: bytes[40..].to_vec(),
            unknown: vec![false; w * h],
        })
    }
}

/// Soft cost at distance `d` from the nearest obstacle.
pub fn inflation_cost(d: f64, robot_radius: f64, soft_band: f64) -> u8 {
    const EPS: f64 = 1e-9;
    if d <= robot_radius + EPS {
        LETHAL
    } else if d <= robot_radius + soft_band + EPS {
        let frac = 1.0 - (d - robot_radius) / soft_band;
        (MAX_SOFT_COST as f64 * frac.max(0.0)).round() as u8
    } else {
        0
    }
}

/// Grows occupied cells into lethal and soft cost using exact Euclidean
/// distances between cell centers.
pub fn inflate(grid: &OccupancyGrid, robot_radius: f64, soft_band: f64) -> CostMap {
    let g = grid.geometry;
    let mut out = CostMap::new(g);
    for (i, s) in grid.cells.iter().enumerate() {
        out.unknown[i] = *s == CellState::Unknown;
    }
    let reach = ((robot_radius + soft_band) / g.cell_size).ceil() as i64;
    let kernel: Vec<(i64, i64, u8)> = (-reach..=reach)
        .flat_map(|dr| (-reach..=reach).map(move |dc| (dc, dr)))
        .filter_map(|(dc, dr)| {
            let d = g.cell_size * ((dc * dc + dr * dr) as f64).sqrt();
            let c = inflation_cost(d, robot_radius, soft_band);
            (c > 0).then_some((dc, dr, c))
        })
        .collect();
    let (w, h) = (g.width as i64, g.height as i64);
    for (i, s) in grid.cells.iter().enumerate() {
        if *s != CellState::Occupied {
            continue;
        }
        let (col, row) = g.cell_of_index(i);
        for &(dc, dr, c) in &kernel {
            let (cc, rr) = (col as i64 + dc, row as i64 + dr);
            if cc < 0 || rr < 0 || cc >= w || rr >= h {
                continue;
            }
            let j = (rr * w + cc) as usize;
            if out.costs[j] < c {
                out.costs[j] = c;
            }
        }
    }
    out
}

/// Per-cell blend `(1 − λ)·global + λ·local`; lethal in either input stays lethal.
pub fn fuse(global: &CostMap, local: &CostMap, lambda: f64) -> Result<CostMap, MapError> {
    if !global.geometry.same_as(&local.geometry) {
        return Err(MapError::GeometryMismatch);
    }
    let mut out = CostMap::new(global.geometry);
    for i in 0..out.costs.len() {
        let (g, l) = (global.costs[i], local.costs[i]);
        out.costs[i] = if g == LETHAL || l == LETHAL {
            LETHAL
        } else {
            ((1.0 - lambda) * g as f64 + lambda * l as f64)
                .round()
                .clamp(0.0, MAX_SOFT_COST as f64) as u8
        };
        out.unknown[i] = global.unknown[i] && local.unknown[i];
    }
    Ok(out)
}

/// Full live-cloud path: sensor cloud → world → voxel filter → outlier
/// rejection. Returns the world-frame cloud ready for floor estimation and
/// projection.
pub fn preprocess_cloud(cloud: &PointCloud, sensor_pose: &Pose3, params: &MappingParams) -> PointCloud {
    let world = cloud.transformed(sensor_pose);
    let filtered = voxel_downsample(&world, params.voxel_size);
    reject_outliers(&filtered, params.outlier_radius, params.outlier_neighbors)
}
