mod oracles;

use mobman::mapping::{CostMap, GridGeometry, LETHAL};
use mobman::planner::{needs_replan, plan_cells, Cell, PlanError, PlannerParams};
use oracles::dijkstra;
use proptest::prelude::*;

fn grid(n: usize) -> impl Strategy<Value = CostMap> {
    proptest::collection::vec(prop_oneof![6 => Just(0u8), 3 => 1u8..=253, 2 => Just(LETHAL)], n * n).prop_map(move |c| {
        let mut m = CostMap::new(GridGeometry::new(0.0, 0.0, 0.05, n, n));
        m.costs = c;
        m
    })
}

fn params(w: f64) -> PlannerParams {
    PlannerParams {
        heuristic_weight: w,
        ..PlannerParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimal_with_unit_weight_and_bounded_otherwise(map in grid(24), s in (0usize..24, 0usize..24), t in (0usize..24, 0usize..24)) {
        let (s, t) = (Cell::new(s.0, s.1), Cell::new(t.0, t.1));
        let scale = PlannerParams::default().cost_scale;
        let oracle = dijkstra(&map, s, t, scale);
        let exact = plan_cells(&map, s, &[t], &params(1.0));
        let greedy = plan_cells(&map, s, &[t], &params(1.2));
        match oracle {
            None => {
                prop_assert!(exact.is_err());
                prop_assert!(greedy.is_err());
            }
            Some(best) => {
                let exact = exact.unwrap();
                let greedy = greedy.unwrap();
                prop_assert!((exact.cost - best).abs() < 1e-9);
                prop_assert!(greedy.cost <= 1.2 * best + 1e-9);
                for p in [&exact, &greedy] {
                    prop_assert_eq!(p.cells[0], s);
                    prop_assert_eq!(*p.cells.last().unwrap(), t);
                    prop_assert!(p.cells.iter().all(|c| !map.is_lethal(c.col, c.row)));
                    prop_assert!(p.cells.windows(2).all(|w| w[0].is_adjacent(&w[1])));
                    prop_assert!(!needs_replan(p, 0, &map));
                }
            }
        }
    }

    #[test]
    fn deterministic(map in grid(20)) {
        let (s, t) = (Cell::new(0, 0), Cell::new(19, 19));
        let a = plan_cells(&map, s, &[t], &params(1.2));
        let b = plan_cells(&map, s, &[t], &params(1.2));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn blocked_start_and_walled_goal() {
    let mut map = CostMap::new(GridGeometry::new(0.0, 0.0, 0.05, 10, 10));
    map.set_cost(0, 0, LETHAL);
    assert_eq!(plan_cells(&map, Cell::new(0, 0), &[Cell::new(9, 9)], &params(1.0)), Err(PlanError::StartBlocked));
    let mut map = CostMap::new(GridGeometry::new(0.0, 0.0, 0.05, 10, 10));
    for r in 0..10 {
        map.set_cost(5, r, LETHAL);
    }
    assert_eq!(plan_cells(&map, Cell::new(0, 0), &[Cell::new(9, 9)], &params(1.0)), Err(PlanError::NoPath));
}
