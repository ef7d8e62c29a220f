//! Weighted A* on an 8-connected cost grid, waypoint subsampling and replan
//! checks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::Pose2;
use crate::mapping::{CostMap, GridGeometry, LETHAL};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("start blocked")]
    StartBlocked,
    #[error("no path")]
    NoPath,
    #[error("{0} lies outside the cost map")]
    OutOfBounds(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub heuristic_weight: f64,
    /// Multiplier turning a cell cost into extra traversal length.
    pub cost_scale: f64,
    pub avoid_unknown: bool,
    pub goal_radius: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            heuristic_weight: 1.2,
            cost_scale: 1.0 / 64.0,
            avoid_unknown: false,
            goal_radius: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    pub fn is_adjacent(&self, other: &Cell) -> bool {
        let dc = self.col.abs_diff(other.col);
        let dr = self.row.abs_diff(other.row);
        dc <= 1 && dr <= 1 && (dc + dr) > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub cost: f64,
    /// The goal region was empty and the nearest cell was used instead.
    pub goal_snapped: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Waypoints {
    pub points: Vec<(f64, f64)>,
}

impl Waypoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        self.points.last().copied()
    }
}

fn blocked(map: &CostMap, idx: usize, params: &PlannerParams) -> bool {
    map.costs[idx] == LETHAL || (params.avoid_unknown && map.unknown[idx])
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    hi - lo + std::f64::consts::SQRT_2 * lo
}

/// Cells whose centers lie within `radius` of `(x, z)`; falls back to the
/// nearest in-grid cell center (flagged).
pub fn goal_region(geometry: &GridGeometry, x: f64, z: f64, radius: f64) -> (Vec<Cell>, bool) {
    let s = geometry.cell_size;
    let c0 = ((x - radius - geometry.origin.x) / s - 0.5).floor().max(0.0) as usize;
    let r0 = ((z - radius - geometry.origin.z) / s - 0.5).floor().max(0.0) as usize;
    let c1 = (((x + radius - geometry.origin.x) / s - 0.5).ceil().max(0.0) as usize).min(geometry.width - 1);
    let r1 = (((z + radius - geometry.origin.z) / s - 0.5).ceil().max(0.0) as usize).min(geometry.height - 1);
    let mut cells = Vec::new();
    for row in r0..=r1 {
        for col in c0..=c1 {
            let (cx, cz) = geometry.cell_center(col, row);
            if (cx - x).hypot(cz - z) <= radius + 1e-12 {
                cells.push(Cell::new(col, row));
            }
        }
    }
    if !cells.is_empty() {
        return (cells, false);
    }
    let col = ((x - geometry.origin.x) / s).floor().clamp(0.0, (geometry.width - 1) as f64) as usize;
    let row = ((z - geometry.origin.z) / s).floor().clamp(0.0, (geometry.height - 1) as f64) as usize;
    (vec![Cell::new(col, row)], true)
}

/// Plans from the cell containing `start` to the goal region around `goal`.
pub fn plan(map: &CostMap, start: &Pose2, goal: &Pose2, params: &PlannerParams) -> Result<Path, PlanError> {
    let g = &map.geometry;
    let (sc, sr) = g.world_to_cell(start.x, start.z).ok_or(PlanError::OutOfBounds("start"))?;
    g.world_to_cell(goal.x, goal.z).ok_or(PlanError::OutOfBounds("goal"))?;
    let (goals, snapped) = goal_region(g, goal.x, goal.z, params.goal_radius);
    let mut path = plan_cells(map, Cell::new(sc, sr), &goals, params)?;
    path.goal_snapped = snapped;
    Ok(path)
}

/// Grid-level search. Edge cost is step length (meters) scaled by
/// `1 + cost_scale·cost(destination)`; diagonal moves may not cut past a
/// blocked orthogonal neighbor.
pub fn plan_cells(map: &CostMap, start: Cell, goals: &[Cell], params: &PlannerParams) -> Result<Path, PlanError> {
    let geo = &map.geometry;
    let (w, h) = (geo.width, geo.height);
    let start_idx = geo.index(start.col, start.row);
    if blocked(map, start_idx, params) {
        return Err(PlanError::StartBlocked);
    }
    let mut is_goal = vec![false; w * h];
    let goal_cells: Vec<(usize, usize)> = goals
        .iter()
        .filter(|c| c.col < w && c.row < h && !blocked(map, geo.index(c.col, c.row), params))
        .map(|c| (c.col, c.row))
        .collect();
    if goal_cells.is_empty() {
        return Err(PlanError::NoPath);
    }
    for &(c, r) in &goal_cells {
        is_goal[geo.index(c, r)] = true;
    }
    let s = geo.cell_size;
    let heuristic = |c: usize, r: usize| -> f64 {
        let best = goal_cells
            .iter()
            .map(|&gc| octile((c, r), gc))
            .fold(f64::INFINITY, f64::min);
        params.heuristic_weight * best * s
    };

    let mut best = vec![f64::INFINITY; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut heap = BinaryHeap::new();
    best[start_idx] = 0.0;
    let h0 = heuristic(start.col, start.row);
    heap.push(Entry { f: h0, h: h0, idx: start_idx });

    const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    while let Some(Entry { f, h: hh, idx }) = heap.pop() {
        let g_here = best[idx];
        if f > g_here + hh + 1e-12 {
            continue;
        }
        if is_goal[idx] {
            let mut cells = vec![];
            let mut cur = idx;
            while cur != usize::MAX {
                let (c, r) = geo.cell_of_index(cur);
                cells.push(Cell::new(c, r));
                cur = parent[cur];
            }
            cells.reverse();
            return Ok(Path {
                cells,
                cost: g_here,
                goal_snapped: false,
            });
        }
        let (c, r) = geo.cell_of_index(idx);
        for (dc, dr) in STEPS {
            let (nc, nr) = (c as i64 + dc, r as i64 + dr);
            if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                continue;
            }
            let (nc, nr) = (nc as usize, nr as usize);
            let nidx = geo.index(nc, nr);
            if blocked(map, nidx, params) {
                continue;
            }
            let diagonal = dc != 0 && dr != 0;
            if diagonal && (blocked(map, geo.index(nc, r), params) || blocked(map, geo.index(c, nr), params)) {
                continue;
            }
            let len = if diagonal { std::f64::consts::SQRT_2 * s } else { s };
            let ng = g_here + len * (1.0 + params.cost_scale * map.costs[nidx] as f64);
            if ng < best[nidx] {
                best[nidx] = ng;
                parent[nidx] = idx;
                let nh = heuristic(nc, nr);
                heap.push(Entry { f: ng + nh, h: nh, idx: nidx });
            }
        }
    }
    Err(PlanError::NoPath)
}

/// Subsamples cell centers to about two cells of spacing (kept within
/// `[0.05, 0.15]` m). The first and final cells are always kept.
pub fn extract_waypoints(path: &Path, geometry: &GridGeometry) -> Waypoints {
    let target = (2.0 * geometry.cell_size).clamp(0.05, 0.15);
    let centers: Vec<(f64, f64)> = path
        .cells
        .iter()
        .map(|c| geometry.cell_center(c.col, c.row))
        .collect();
    let Some(&first) = centers.first() else {
        return Waypoints::default();
    };
    let mut points = vec![first];
    let mut last = first;
    for i in 1..centers.len() {
        let is_final = i + 1 == centers.len();
        let next_too_far = !is_final && {
            let n = centers[i + 1];
            (n.0 - last.0).hypot(n.1 - last.1) > target + 1e-9
        };
        if is_final || next_too_far {
            points.push(centers[i]);
            last = centers[i];
        }
    }
    Waypoints { points }
}

/// True iff any cell from `from_index` onward is lethal in `map`.
pub fn needs_replan(path: &Path, from_index: usize, map: &CostMap) -> bool {
    path.cells
        .iter()
        .skip(from_index)
        .any(|c| c.col >= map.geometry.width || c.row >= map.geometry.height || map.is_lethal(c.col, c.row))
}

/// Index of the path cell nearest to a world point, searching forward from
/// `hint` only so progress is monotonic.
pub fn progress_index(path: &Path, geometry: &GridGeometry, x: f64, z: f64, hint: usize) -> usize {
    let mut best = hint.min(path.cells.len().saturating_sub(1));
    let mut best_d = f64::INFINITY;
    for (i, c) in path.cells.iter().enumerate().skip(best) {
        let (cx, cz) = geometry.cell_center(c.col, c.row);
        let d = (cx - x).hypot(cz - z);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}
