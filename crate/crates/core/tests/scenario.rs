use evacsim_core::geometry::{Segment, Vec2};
use evacsim_core::scenario::{DEFAULT_CLEARANCE, HOTEL_PRIMARY_START};
use evacsim_core::{Point2, Scenario};
use evacsim_testkit::buildings::random_building;
use evacsim_testkit::grid::grid_distance;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID_CELL: f64 = 0.05;

fn los_brute_force(s: &Scenario, a: Point2, b: Point2) -> bool {
    let sight = Segment::new(a, b);
    s.walls.iter().all(|w| !w.intersects(&sight))
}

fn random_point(s: &Scenario, rng: &mut ChaCha8Rng) -> Point2 {
    Vec2::new(
        rng.gen_range(s.bounds.min.x..s.bounds.max.x),
        rng.gen_range(s.bounds.min.y..s.bounds.max.y),
    )
}

#[test]
fn visibility_graph_matches_grid_on_random_buildings() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for b in 0..20 {
        let s = random_building(&mut rng, &format!("b{b}"));
        let start = s.start_positions[0];
        for exit in &s.exits {
            let Ok(path) = s.shortest_path(start, exit, DEFAULT_CLEARANCE) else {
                continue;
            };
            let grid = grid_distance(&s, start, exit.portal.midpoint(), DEFAULT_CLEARANCE, GRID_CELL)
                .expect("grid oracle reaches an exit the graph reaches");
            let rel = (path.length() - grid).abs() / grid.max(1e-9);
            assert!(rel <= 0.02, "building {b} exit {}: graph {} grid {grid}", exit.id, path.length());
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn hotel_nearest_exit_is_calibrated() {
    let s = Scenario::hotel();
    let start = s.start_positions[HOTEL_PRIMARY_START];
    let (exit, d) = s.nearest_exit(start).unwrap();
    assert!((d - 13.5).abs() <= 0.5, "nearest exit {} at {d}", exit.id);
    let grid = grid_distance(&s, start, exit.portal.midpoint(), DEFAULT_CLEARANCE, GRID_CELL).unwrap();
    assert!((grid - 13.5).abs() <= 0.5, "grid oracle {grid}");
    assert!((d - grid).abs() / grid <= 0.02);
    // the nearest exit cannot be seen from the start
    assert!(!s.line_of_sight(start, exit.portal.midpoint()).unwrap());
}

#[test]
fn hotel_line_of_sight_matches_brute_force() {
    let s = Scenario::hotel();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut blocked = 0;
    for _ in 0..5000 {
        let a = random_point(&s, &mut rng);
        let b = random_point(&s, &mut rng);
        let expect = los_brute_force(&s, a, b);
        assert_eq!(s.line_of_sight(a, b).unwrap(), expect, "{a:?} -> {b:?}");
        blocked += usize::from(!expect);
    }
    assert!(blocked > 1000);
    // either side of the corridor's south wall
    let a = Vec2::new(10.0, 5.0);
    let b = Vec2::new(10.0, 7.0);
    assert!(!los_brute_force(&s, a, b));
    assert!(!s.line_of_sight(a, b).unwrap());
}

#[test]
fn nearest_exit_is_minimal_at_every_hotel_start() {
    let s = Scenario::hotel();
    for (i, &p) in s.start_positions.iter().enumerate() {
        let (nearest, d) = s.nearest_exit(p).unwrap();
        for exit in &s.exits {
            let other = s.shortest_path(p, exit, DEFAULT_CLEARANCE).unwrap().length();
            assert!(d <= other + 1e-9, "start {i}: {} at {d}, {} at {other}", nearest.id, exit.id);
        }
    }
}

fn hotel_point() -> impl Strategy<Value = Point2> {
    (0.3f64..55.7, 0.3f64..13.7).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn line_of_sight_is_symmetric(a in hotel_point(), b in hotel_point()) {
        let s = Scenario::hotel();
        prop_assert_eq!(s.line_of_sight(a, b).unwrap(), s.line_of_sight(b, a).unwrap());
    }

    #[test]
    fn shortest_paths_are_long_enough_and_clear(p in hotel_point()) {
        let s = Scenario::hotel();
        // some rooms have no door
        prop_assume!(s.wall_clearance(p) >= 0.3 && s.nearest_exit(p).is_ok());
        for exit in &s.exits {
            let path = s.shortest_path(p, exit, DEFAULT_CLEARANCE).unwrap();
            let goal = exit.portal.midpoint();
            prop_assert!(path.length() >= p.distance(goal) - 1e-9);
            prop_assert!(path.first().distance(p) < 1e-9);
            prop_assert!(path.last().distance(goal) < 1e-9);
            for q in path.resample(0.01) {
                prop_assert!(s.wall_clearance(q) >= DEFAULT_CLEARANCE - 1e-6, "{:?} too close", q);
            }
        }
    }
}
