use rand::Rng;

use crate::geometry::{PathPolyline, Point2, Vec2};
use crate::scenario::Scenario;

/// Distance along a candidate route used to read its initial direction.
const DIRECTION_PROBE: f64 = 1.5;
/// Options pointing within this angle of straight back are not offered.
const REVERSE_EXCLUSION: f64 = std::f64::consts::FRAC_PI_4;
/// Options closer than this in direction are the same branch.
const SAME_BRANCH: f64 = std::f64::consts::PI / 6.0;
const MIN_DECISION_SPACING: f64 = 1.0;
const END_MARGIN: f64 = 0.5;
const MAX_DECISIONS: usize = 6;

/// One way to continue from a junction.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOption {
    pub exit_index: usize,
    /// Unit direction of the first stretch of the branch.
    pub direction: Vec2,
    /// Shortest path from the junction to the exit along this branch.
    pub path: PathPolyline,
}

impl BranchOption {
    pub fn length(&self) -> f64 {
        self.path.length()
    }
}

fn initial_direction(path: &PathPolyline) -> Option<Vec2> {
    let probe = DIRECTION_PROBE.min(path.length());
    (path.point_at(probe) - path.first()).try_normalize()
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    a.cross(b).atan2(a.dot(b)).abs()
}

/// Distinct branches from `at`, shortest first.
///
/// Each exit contributes its shortest path; branches heading back along
/// `incoming` are dropped and branches with nearly the same direction are
/// merged, keeping the shortest.
pub fn branch_options(
    scenario: &Scenario,
    at: Point2,
    incoming: Option<Vec2>,
    clearance: f64,
) -> Vec<BranchOption> {
    let mut candidates: Vec<BranchOption> = scenario
        .exits
        .iter()
        .enumerate()
        .filter_map(|(i, exit)| {
            let path = scenario.shortest_path(at, exit, clearance).ok()?;
            let direction = initial_direction(&path)?;
            Some(BranchOption {
                exit_index: i,
                direction,
                path,
            })
        })
        .filter(|o| match incoming {
            Some(inc) => angle_between(o.direction, -inc) > REVERSE_EXCLUSION,
            None => true,
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.length()
            .total_cmp(&b.length())
            .then(scenario.exits[a.exit_index].id.cmp(&scenario.exits[b.exit_index].id))
    });
    let mut kept: Vec<BranchOption> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|k| angle_between(k.direction, c.direction) > SAME_BRANCH)
        {
            kept.push(c);
        }
    }
    kept
}

/// Route recalled from a floor plan seen beforehand.
///
/// Starts from the shortest path to the nearest exit. At every junction the
/// correct branch (the shortest) is taken with probability
/// `1 - error_probability`, otherwise one of the other branches uniformly.
/// With `error_probability == 0` the result is exactly the shortest path.
pub fn plan_floor_plan_memory<R: Rng + ?Sized>(
    scenario: &Scenario,
    start: Point2,
    error_probability: f64,
    clearance: f64,
    rng: &mut R,
) -> PathPolyline {
    let initial = scenario
        .nearest_exit_with_clearance(start, clearance)
        .ok()
        .and_then(|(exit, _)| scenario.shortest_path(start, exit, clearance).ok());
    let Some(mut route) = initial else {
        return PathPolyline::new(vec![start]).expect("single vertex");
    };
    let mut last_decision: Option<f64> = None;
    for _ in 0..MAX_DECISIONS {
        let cumulative = route.cumulative_arclength();
        let total = route.length();
        let junction = (1..route.len().saturating_sub(1)).find(|&i| {
            let s = cumulative[i];
            s < total - END_MARGIN && last_decision.is_none_or(|d| s >= d + MIN_DECISION_SPACING)
        });
        let Some(i) = junction else { break };
        let s_j = cumulative[i];
        let at = route.vertices()[i];
        last_decision = Some(s_j);
        let incoming = (at - route.point_at((s_j - DIRECTION_PROBE).max(0.0))).try_normalize();
        let options = branch_options(scenario, at, incoming, clearance);
        if options.len() < 2 {
            continue;
        }
        let chosen = if rng.gen::<f64>() < error_probability {
            &options[1 + rng.gen_range(0..options.len() - 1)]
        } else {
            &options[0]
        };
        let current = route.suffix(s_j);
        let same_way = initial_direction(&current)
            .is_some_and(|d| angle_between(d, chosen.direction) <= SAME_BRANCH);
        if same_way {
            continue;
        }
        let vertices: Vec<Point2> = route.vertices()[..=i]
            .iter()
            .copied()
            .chain(chosen.path.vertices()[1..].iter().copied())
            .collect();
        route = PathPolyline::from_points_dedup(vertices, 1e-12);
    }
    route
}
