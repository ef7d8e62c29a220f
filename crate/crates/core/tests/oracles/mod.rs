use std::cmp::Ordering;
use std::collections::BinaryHeap;

use mobman::mapping::{CostMap, LETHAL};
use mobman::planner::Cell;

/// Plain Dijkstra with the same edge model: step length times
/// `1 + scale·cost(destination)`, no diagonal past a lethal side cell.
pub fn dijkstra(map: &CostMap, start: Cell, goal: Cell, scale: f64) -> Option<f64> {
    #[derive(PartialEq)]
    struct E(f64, usize);
    impl Eq for E {}
    impl Ord for E {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.total_cmp(&self.0)
        }
    }
    impl PartialOrd for E {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    let g = map.geometry;
    let (w, h) = (g.width as i64, g.height as i64);
    let lethal = |c: i64, r: i64| map.costs[(r * w + c) as usize] == LETHAL;
    if lethal(start.col as i64, start.row as i64) || lethal(goal.col as i64, goal.row as i64) {
        return None;
    }
    let mut dist = vec![f64::INFINITY; (w * h) as usize];
    let s = (start.row as i64 * w + start.col as i64) as usize;
    dist[s] = 0.0;
    let mut heap = BinaryHeap::from([E(0.0, s)]);
    while let Some(E(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (c, r) = (i as i64 % w, i as i64 / w);
        if (c as usize, r as usize) == (goal.col, goal.row) {
            return Some(d);
        }
        for dc in -1..=1i64 {
            for dr in -1..=1i64 {
                let (nc, nr) = (c + dc, r + dr);
                if (dc, dr) == (0, 0) || nc < 0 || nr < 0 || nc >= w || nr >= h || lethal(nc, nr) {
                    continue;
                }
                if dc != 0 && dr != 0 && (lethal(nc, r) || lethal(c, nr)) {
                    continue;
                }
                let len = if dc != 0 && dr != 0 { 2f64.sqrt() } else { 1.0 } * g.cell_size;
                let j = (nr * w + nc) as usize;
                let nd = d + len * (1.0 + scale * map.costs[j] as f64);
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(E(nd, j));
                }
            }
        }
    }
    None
}
