use mobman::frames::Pose3;
use mobman::mapping::{
    fuse, inflate, inflation_cost, instantaneous_floor, integrate_cloud, project_occupancy, reject_outliers, CellState,
    CostMap, GridGeometry, OccupancyGrid, PointCloud, PoseQuality, VoxelMap, LETHAL,
};
use proptest::prelude::*;

fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    proptest::collection::vec((-1.0..1.0f64, -0.2..1.0f64, -1.0..1.0f64), 0..max)
        .prop_map(|pts| PointCloud::new(pts.into_iter().map(|(x, y, z)| [x, y, z]).collect(), 0.0))
}

fn brute_force(c: &PointCloud, r: f64, k: usize) -> Vec<[f64; 3]> {
    c.points
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            c.points
                .iter()
                .enumerate()
                .filter(|(j, q)| j != i && (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>() <= r * r)
                .count()
                >= k
        })
        .map(|(_, p)| *p)
        .collect()
}

fn occupancy(cells: &[bool], w: usize) -> OccupancyGrid {
    let g = GridGeometry::new(0.0, 0.0, 0.05, w, cells.len() / w);
    let mut grid = OccupancyGrid::new(g);
    for (i, &o) in cells.iter().enumerate() {
        grid.cells[i] = if o { CellState::Occupied } else { CellState::Free };
    }
    grid
}

fn costmap(w: usize, h: usize) -> impl Strategy<Value = CostMap> {
    proptest::collection::vec(prop_oneof![3 => 0u8..=253, 1 => Just(LETHAL)], w * h).prop_map(move |c| {
        let mut m = CostMap::new(GridGeometry::new(0.0, 0.0, 0.05, w, h));
        m.costs = c;
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outlier_rejection_matches_brute_force(c in cloud(400), r in 0.05..0.4f64, k in 0usize..5) {
        prop_assert_eq!(reject_outliers(&c, r, k).points, brute_force(&c, r, k));
    }

    #[test]
    fn degraded_integration_is_a_no_op(a in cloud(200), b in cloud(200)) {
        let mut map = VoxelMap::new(0.05);
        integrate_cloud(&mut map, &a, &Pose3::identity(), PoseQuality::Good);
        let before = map.clone();
        integrate_cloud(&mut map, &b, &Pose3::identity(), PoseQuality::Degraded);
        prop_assert_eq!(map, before);
    }

    #[test]
    fn projection_is_deterministic(a in cloud(300), floor in -0.1..0.1f64) {
        let mut map = VoxelMap::new(0.05);
        integrate_cloud(&mut map, &a, &Pose3::identity(), PoseQuality::Good);
        let g = GridGeometry::new(-1.0, -1.0, 0.05, 40, 40);
        prop_assert_eq!(project_occupancy(&map, floor, 0.25, 1.5, g), project_occupancy(&map, floor, 0.25, 1.5, g));
    }

    #[test]
    fn inflation_cost_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(inflation_cost(near, 0.3, 0.2) >= inflation_cost(far, 0.3, 0.2));
    }

    #[test]
    fn lethal_set_is_distance_sublevel_set(cells in proptest::collection::vec(proptest::bool::weighted(0.03), 30 * 30)) {
        let grid = occupancy(&cells, 30);
        let map = inflate(&grid, 0.3, 0.2);
        let g = grid.geometry;
        let occupied: Vec<(i64, i64)> = (0..cells.len())
            .filter(|&i| cells[i])
            .map(|i| { let (c, r) = g.cell_of_index(i); (c as i64, r as i64) })
            .collect();
        for i in 0..cells.len() {
            let (c, r) = g.cell_of_index(i);
            let d2 = occupied.iter().map(|o| (o.0 - c as i64).pow(2) + (o.1 - r as i64).pow(2)).min();
            let d = d2.map_or(f64::INFINITY, |d2| g.cell_size * (d2 as f64).sqrt());
            prop_assert_eq!(map.costs[i] == LETHAL, d <= 0.3 + 1e-9, "cell {} {} at distance {}", c, r, d);
            prop_assert_eq!(map.costs[i], if d.is_finite() { inflation_cost(d, 0.3, 0.2) } else { 0 });
        }
    }

    #[test]
    fn fuse_endpoints(g in costmap(12, 10), l in costmap(12, 10)) {
        let at0 = fuse(&g, &l, 0.0).unwrap();
        let at1 = fuse(&g, &l, 1.0).unwrap();
        for i in 0..g.costs.len() {
            let lethal = g.costs[i] == LETHAL || l.costs[i] == LETHAL;
            prop_assert_eq!(at0.costs[i], if lethal { LETHAL } else { g.costs[i] });
            prop_assert_eq!(at1.costs[i], if lethal { LETHAL } else { l.costs[i] });
        }
    }

    #[test]
    fn floor_formula(c in cloud(500).prop_filter("non-empty", |c| !c.is_empty())) {
        let mut ys: Vec<f64> = c.points.iter().map(|p| p[1]).collect();
        ys.sort_by(f64::total_cmp);
        let p5 = ys[((0.05 * ys.len() as f64).ceil() as usize).max(1) - 1];
        let band: Vec<f64> = ys.iter().copied().filter(|&y| y >= p5 && y <= p5 + 0.1).collect();
        let expected = band.iter().sum::<f64>() / band.len() as f64;
        prop_assert!((instantaneous_floor(&c, 0.1).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn codecs_round_trip(m in costmap(9, 7), c in cloud(100)) {
        prop_assert_eq!(CostMap::decode(&m.encode()).unwrap().costs, m.costs);
        let back = PointCloud::decode(&c.encode(), 0.0).unwrap();
        prop_assert_eq!(back.encode(), c.encode());
        for (a, b) in back.points.iter().zip(&c.points) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-6);
            }
        }
    }
}
