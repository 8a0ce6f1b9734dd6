//! Building geometry, signage and navigable-space queries.
//!
//! Walls are zero-thickness segments; an agent's body is accounted for by
//! the clearance passed to the path queries. Everything here is immutable
//! once loaded, and the lazily built navigation caches are shared behind
//! locks so a [`Scenario`] can be read from any number of threads.

mod field;
mod file;
mod nav;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::geometry::{PathPolyline, Point2, Rect, Segment, Vec2};

pub use field::DistanceField;
pub use file::{ScenarioDocument, SignDoc};
pub use nav::NavGraph;

/// Clearance used when a query does not name one: the default agent radius.
pub const DEFAULT_CLEARANCE: f64 = 0.25;

/// Smallest admissible agent radius; starts must keep at least this far from walls.
pub const MIN_START_CLEARANCE: f64 = 0.15;

const GUIDING_LINE_EXIT_TOLERANCE: f64 = 0.5;
const UNIT_TOLERANCE: f64 = 1e-6;
const ON_WALL_TOLERANCE: f64 = 1e-6;

/// Bundled hotel-style fixture: a 56 m corridor with eight guest rooms and
/// an exit at each end.
pub const HOTEL_FIXTURE: &str = include_str!("../../fixtures/hotel.json");

/// Index of the primary start room in [`HOTEL_FIXTURE`].
pub const HOTEL_PRIMARY_START: usize = 0;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("point ({x}, {y}) is outside the scenario bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("exit {0:?} is unreachable")]
    Unreachable(String),
    #[error("no exit is reachable from ({x}, {y})")]
    NoExitReachable { x: f64, y: f64 },
    #[error("unknown exit {0:?}")]
    UnknownExit(String),
}

fn out_of_bounds(p: Point2) -> ScenarioError {
    ScenarioError::OutOfBounds { x: p.x, y: p.y }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exit {
    pub id: String,
    /// The crossing line.
    pub portal: Segment,
    pub label: String,
}

impl Exit {
    pub fn midpoint(&self) -> Point2 {
        self.portal.midpoint()
    }
}

/// Escape exit sign mounted above head height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignPlacement {
    pub position: Point2,
    /// Unit normal of the sign face; the sign is readable from this side.
    pub facing: Vec2,
    pub arrow_direction: Vec2,
    pub visibility_range: f64,
}

/// Half-angle of the cone in front of a sign from which it can be read.
pub const SIGN_VIEW_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Default)]
struct Caches {
    nav: Mutex<HashMap<u64, Arc<NavGraph>>>,
    field: OnceLock<DistanceField>,
}

pub struct Scenario {
    pub id: String,
    pub walls: Vec<Segment>,
    pub exits: Vec<Exit>,
    pub start_positions: Vec<Point2>,
    pub guiding_lines: BTreeMap<String, PathPolyline>,
    pub exit_signs: Vec<SignPlacement>,
    pub floor_plan_posts: Vec<Point2>,
    pub bounds: Rect,
    caches: Caches,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("id", &self.id)
            .field("walls", &self.walls.len())
            .field("exits", &self.exits)
            .field("start_positions", &self.start_positions)
            .finish_non_exhaustive()
    }
}

impl Clone for Scenario {
    fn clone(&self) -> Self {
        Scenario {
            id: self.id.clone(),
            walls: self.walls.clone(),
            exits: self.exits.clone(),
            start_positions: self.start_positions.clone(),
            guiding_lines: self.guiding_lines.clone(),
            exit_signs: self.exit_signs.clone(),
            floor_plan_posts: self.floor_plan_posts.clone(),
            bounds: self.bounds,
            caches: Caches::default(),
        }
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDocument = serde_json::from_str(document).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Scenario::from_document(doc)
}

impl Scenario {
    /// Validates every type invariant and builds the scenario.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        id: String,
        bounds: Rect,
        walls: Vec<Segment>,
        exits: Vec<Exit>,
        start_positions: Vec<Point2>,
        guiding_lines: BTreeMap<String, PathPolyline>,
        exit_signs: Vec<SignPlacement>,
        floor_plan_posts: Vec<Point2>,
    ) -> Result<Scenario, ScenarioError> {
        let inv = |msg: String| Err(ScenarioError::Invariant(msg));
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
            return inv("bounds must have positive extent".into());
        }
        let inside = |p: Point2| bounds.contains_with_tolerance(p, 1e-9);
        for (i, w) in walls.iter().enumerate() {
            if !(w.length() > 0.0) {
                return inv(format!("wall {i} has zero length"));
            }
            if !inside(w.a) || !inside(w.b) {
                return inv(format!("bounds contain all geometry: wall {i} lies outside"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for exit in &exits {
            if !seen.insert(exit.id.as_str()) {
                return inv(format!("exit id {:?} is duplicated", exit.id));
            }
            if !(exit.portal.length() > 0.0) {
                return inv(format!("exit {:?}: portal length must be positive", exit.id));
            }
            if !inside(exit.portal.a) || !inside(exit.portal.b) {
                return inv(format!("bounds contain all geometry: exit {:?} lies outside", exit.id));
            }
            for end in [exit.portal.a, exit.portal.b] {
                let on_wall = walls
                    .iter()
                    .any(|w| w.distance_to_point(end) <= ON_WALL_TOLERANCE);
                if !on_wall {
                    return inv(format!(
                        "exit {:?}: portal endpoint ({}, {}) is not on wall geometry",
                        exit.id, end.x, end.y
                    ));
                }
            }
        }
        for (i, &p) in start_positions.iter().enumerate() {
            if !inside(p) {
                return inv(format!("start position {i} lies outside the bounds"));
            }
            let clearance = min_wall_distance(&walls, p);
            if clearance < MIN_START_CLEARANCE {
                return inv(format!(
                    "start position {i} is inside a wall ({clearance:.3} m from wall geometry)"
                ));
            }
        }
        for (exit_id, line) in &guiding_lines {
            let Some(exit) = exits.iter().find(|e| &e.id == exit_id) else {
                return inv(format!("guiding line refers to unknown exit {exit_id:?}"));
            };
            if line.vertices().iter().any(|&v| !inside(v)) {
                return inv(format!("bounds contain all geometry: guiding line {exit_id:?}"));
            }
            let gap = exit.portal.distance_to_point(line.last());
            if gap > GUIDING_LINE_EXIT_TOLERANCE {
                return inv(format!(
                    "guiding line {exit_id:?} ends {gap:.3} m from its exit (limit {GUIDING_LINE_EXIT_TOLERANCE} m)"
                ));
            }
        }
        for (i, sign) in exit_signs.iter().enumerate() {
            if (sign.facing.length() - 1.0).abs() > UNIT_TOLERANCE
                || (sign.arrow_direction.length() - 1.0).abs() > UNIT_TOLERANCE
            {
                return inv(format!("exit sign {i}: facing and arrow must be unit vectors"));
            }
            if !(sign.visibility_range > 0.0) {
                return inv(format!("exit sign {i}: visibility range must be positive"));
            }
            if !inside(sign.position) {
                return inv(format!("bounds contain all geometry: exit sign {i}"));
            }
        }
        for (i, &p) in floor_plan_posts.iter().enumerate() {
            if !inside(p) {
                return inv(format!("bounds contain all geometry: floor plan post {i}"));
            }
        }
        Ok(Scenario {
            id,
            walls,
            exits,
            start_positions,
            guiding_lines,
            exit_signs,
            floor_plan_posts,
            bounds,
            caches: Caches::default(),
        })
    }

    /// The bundled hotel fixture.
    pub fn hotel() -> Scenario {
        load_scenario(HOTEL_FIXTURE).expect("bundled hotel fixture is valid")
    }

    pub fn exit(&self, id: &str) -> Option<&Exit> {
        self.exits.iter().find(|e| e.id == id)
    }

    /// Distance from `p` to the nearest wall (infinite without walls).
    pub fn wall_clearance(&self, p: Point2) -> f64 {
        min_wall_distance(&self.walls, p)
    }

    /// Nearest point on any wall, with its distance.
    pub fn nearest_wall_point(&self, p: Point2) -> Option<(Point2, f64)> {
        self.walls
            .iter()
            .map(|w| {
                let q = w.closest_point(p);
                (q, q.distance(p))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    fn check_in_bounds(&self, p: Point2) -> Result<(), ScenarioError> {
        if self.bounds.contains_with_tolerance(p, 1e-9) {
            Ok(())
        } else {
            Err(out_of_bounds(p))
        }
    }

    /// True iff the open segment `from -> to` crosses no wall.
    pub fn line_of_sight(&self, from: Point2, to: Point2) -> Result<bool, ScenarioError> {
        self.check_in_bounds(from)?;
        self.check_in_bounds(to)?;
        Ok(self.line_of_sight_unchecked(from, to))
    }

    pub(crate) fn line_of_sight_unchecked(&self, from: Point2, to: Point2) -> bool {
        let d = to - from;
        if d.length_squared() == 0.0 {
            return true;
        }
        // Open segment: trim a hair off both ends so that points resting on a
        // wall (signs, portal endpoints) can still see along it.
        let eps = 1e-9 / d.length().max(1e-9);
        let seg = Segment::new(from + d * eps, to - d * eps);
        let (lo, hi) = bbox(&seg);
        !self.walls.iter().any(|w| {
            let (wlo, whi) = bbox(w);
            wlo.x <= hi.x && whi.x >= lo.x && wlo.y <= hi.y && whi.y >= lo.y && w.intersects(&seg)
        })
    }

    /// Whether `sign` can be read from `viewer`: line of sight, within range
    /// and inside the cone in front of the sign face.
    pub fn sign_visible_from(&self, sign: &SignPlacement, viewer: Point2) -> bool {
        let offset = viewer - sign.position;
        let dist = offset.length();
        if dist > sign.visibility_range {
            return false;
        }
        if dist > 1e-9 {
            let cos = offset.dot(sign.facing) / dist;
            if cos < SIGN_VIEW_HALF_ANGLE.cos() - 1e-12 {
                return false;
            }
        }
        self.bounds.contains_with_tolerance(viewer, 1e-9)
            && self.line_of_sight_unchecked(viewer, sign.position)
    }

    /// Visibility graph for the given clearance, built once and cached.
    pub fn nav_graph(&self, clearance: f64) -> Arc<NavGraph> {
        let key = clearance.to_bits();
        if let Some(g) = self.caches.nav.lock().unwrap().get(&key) {
            return Arc::clone(g);
        }
        let graph = Arc::new(NavGraph::build(self, clearance));
        self.caches
            .nav
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(graph)
            .clone()
    }

    /// Geodesic distance field to the nearest exit, built once and cached.
    pub fn distance_field(&self) -> &DistanceField {
        self.caches.field.get_or_init(|| DistanceField::build(self))
    }

    /// Collision-free path from `from` to the midpoint of `to_exit`.
    pub fn shortest_path(
        &self,
        from: Point2,
        to_exit: &Exit,
        clearance: f64,
    ) -> Result<PathPolyline, ScenarioError> {
        self.check_in_bounds(from)?;
        if to_exit.portal.distance_to_point(from) <= 1e-9 {
            return Ok(PathPolyline::new(vec![from]).expect("single vertex"));
        }
        let graph = self.nav_graph(clearance);
        graph
            .shortest_path(self, from, &[to_exit.midpoint()])
            .map(|(path, _)| path)
            .ok_or_else(|| ScenarioError::Unreachable(to_exit.id.clone()))
    }

    /// Collision-free path to an arbitrary navigable point.
    pub fn shortest_path_to_point(
        &self,
        from: Point2,
        to: Point2,
        clearance: f64,
    ) -> Option<PathPolyline> {
        if from.distance(to) <= 1e-9 {
            return Some(PathPolyline::new(vec![from]).expect("single vertex"));
        }
        let graph = self.nav_graph(clearance);
        graph.shortest_path(self, from, &[to]).map(|(p, _)| p)
    }

    /// Geodesic lengths from `from` to every exit (None when unreachable),
    /// computed with a single graph search.
    pub fn exit_distances(
        &self,
        from: Point2,
        clearance: f64,
    ) -> Result<Vec<Option<f64>>, ScenarioError> {
        self.check_in_bounds(from)?;
        let graph = self.nav_graph(clearance);
        let goals: Vec<Point2> = self.exits.iter().map(Exit::midpoint).collect();
        let mut out = graph.distances_to(self, from, &goals);
        for (d, exit) in out.iter_mut().zip(&self.exits) {
            if exit.portal.distance_to_point(from) <= 1e-9 {
                *d = Some(0.0);
            }
        }
        Ok(out)
    }

    /// Exit with the shortest collision-free path at the default clearance;
    /// ties go to the lexicographically smaller id.
    pub fn nearest_exit(&self, from: Point2) -> Result<(&Exit, f64), ScenarioError> {
        self.nearest_exit_with_clearance(from, DEFAULT_CLEARANCE)
    }

    pub fn nearest_exit_with_clearance(
        &self,
        from: Point2,
        clearance: f64,
    ) -> Result<(&Exit, f64), ScenarioError> {
        let distances = self.exit_distances(from, clearance)?;
        let mut best: Option<(&Exit, f64)> = None;
        for (exit, d) in self.exits.iter().zip(distances) {
            let Some(d) = d else { continue };
            best = match best {
                None => Some((exit, d)),
                Some((b, bd)) => {
                    if d < bd - 1e-9 || ((d - bd).abs() <= 1e-9 && exit.id < b.id) {
                        Some((exit, d))
                    } else {
                        Some((b, bd))
                    }
                }
            };
        }
        best.ok_or(ScenarioError::NoExitReachable {
            x: from.x,
            y: from.y,
        })
    }

    /// Index of the exit whose portal the step `from -> to` crosses, if any.
    pub fn crossed_exit(&self, from: Point2, to: Point2) -> Option<usize> {
        let step = Segment::new(from, to);
        self.exits
            .iter()
            .enumerate()
            .filter_map(|(i, e)| step.crossing_parameter(&e.portal).map(|t| (i, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Serializes back to the scenario file format.
    pub fn to_document(&self) -> ScenarioDocument {
        ScenarioDocument::from_scenario(self)
    }
}

pub(crate) fn min_wall_distance(walls: &[Segment], p: Point2) -> f64 {
    walls
        .iter()
        .map(|w| w.distance_to_point(p))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn bbox(s: &Segment) -> (Vec2, Vec2) {
    (
        Vec2::new(s.a.x.min(s.b.x), s.a.y.min(s.b.y)),
        Vec2::new(s.a.x.max(s.b.x), s.a.y.max(s.b.y)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SQUARE_ROOM: &str = r#"{
        "id": "square",
        "bounds": {"min": [-1, -1], "max": [11, 11]},
        "walls": [[0,0,10,0],[10,0,10,10],[10,10,0,10],[0,10,0,6],[0,4,0,0]],
        "exits": [{"id": "w", "portal": [0,4,0,6], "label": "west door"}],
        "starts": [[5,5]],
        "guiding_lines": {},
        "exit_signs": [],
        "floor_plan_posts": []
    }"#;

    fn corridor(len: f64) -> Scenario {
        let doc = format!(
            r#"{{"id":"corridor","bounds":{{"min":[-1,-1],"max":[{m},3]}},
            "walls":[[0,0,{len},0],[0,2,{len},2],[0,0,0,2]],
            "exits":[{{"id":"e","portal":[{len},0,{len},2],"label":"end"}}],
            "starts":[[1,1]],"guiding_lines":{{}},"exit_signs":[],"floor_plan_posts":[]}}"#,
            m = len + 1.0
        );
        load_scenario(&doc).unwrap()
    }

    #[test]
    fn minimal_square_room_loads() {
        let s = load_scenario(SQUARE_ROOM).unwrap();
        assert_eq!(s.walls.len(), 5);
        assert_eq!(s.exits.len(), 1);
        assert_eq!(s.start_positions.len(), 1);
    }

    #[test]
    fn start_inside_wall_rejected() {
        let doc = SQUARE_ROOM.replace("[[5,5]]", "[[5,0.05]]");
        match load_scenario(&doc) {
            Err(ScenarioError::Invariant(msg)) => assert!(msg.contains("inside a wall"), "{msg}"),
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_parse_error_with_locus() {
        let doc = SQUARE_ROOM.replace("\"starts\"", "\"stairs\"");
        match load_scenario(&doc) {
            Err(ScenarioError::Parse { line, message, .. }) => {
                assert!(line > 1);
                assert!(message.contains("stairs"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn portal_must_touch_walls() {
        let doc = SQUARE_ROOM.replace("[0,4,0,6]", "[2,4,2,6]");
        assert!(matches!(load_scenario(&doc), Err(ScenarioError::Invariant(_))));
    }

    #[test]
    fn guiding_line_must_reach_exit() {
        let doc = SQUARE_ROOM.replace(
            r#""guiding_lines": {}"#,
            r#""guiding_lines": {"w": [[5,5],[2,5]]}"#,
        );
        match load_scenario(&doc) {
            Err(ScenarioError::Invariant(msg)) => assert!(msg.contains("ends"), "{msg}"),
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn line_of_sight_basics() {
        let s = load_scenario(SQUARE_ROOM).unwrap();
        let p = Vec2::new(3.0, 3.0);
        assert!(s.line_of_sight(p, p).unwrap());
        assert!(s.line_of_sight(p, Vec2::new(8.0, 7.0)).unwrap());
        assert!(!s.line_of_sight(p, Vec2::new(10.5, 3.0)).unwrap());
        assert!(matches!(
            s.line_of_sight(p, Vec2::new(50.0, 3.0)),
            Err(ScenarioError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn straight_corridor_path() {
        let s = corridor(20.0);
        let exit = &s.exits[0];
        let path = s.shortest_path(Vec2::new(10.0, 1.0), exit, 0.25).unwrap();
        assert_eq!(path.len(), 2);
        assert_relative_eq!(path.length(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn on_portal_is_zero_length() {
        let s = corridor(20.0);
        let path = s
            .shortest_path(Vec2::new(20.0, 0.7), &s.exits[0], 0.25)
            .unwrap();
        assert_eq!(path.length(), 0.0);
    }

    #[test]
    fn single_exit_is_nearest() {
        let s = load_scenario(SQUARE_ROOM).unwrap();
        let (exit, d) = s.nearest_exit(Vec2::new(5.0, 5.0)).unwrap();
        assert_eq!(exit.id, "w");
        assert_relative_eq!(d, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_corridor_tie_goes_to_smaller_id() {
        let doc = r#"{"id":"sym","bounds":{"min":[-1,-1],"max":[21,3]},
            "walls":[[0,0,20,0],[0,2,20,2]],
            "exits":[{"id":"b","portal":[20,0,20,2],"label":"east"},
                     {"id":"a","portal":[0,0,0,2],"label":"west"}],
            "starts":[[10,1]],"guiding_lines":{},"exit_signs":[],"floor_plan_posts":[]}"#;
        let s = load_scenario(doc).unwrap();
        let (exit, d) = s.nearest_exit(Vec2::new(10.0, 1.0)).unwrap();
        assert_eq!(exit.id, "a");
        assert_relative_eq!(d, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn path_bends_around_wall() {
        // room with an internal partition forcing a detour
        let doc = r#"{"id":"bend","bounds":{"min":[-1,-1],"max":[11,11]},
            "walls":[[0,0,10,0],[10,0,10,10],[10,10,0,10],[0,10,0,6],[0,4,0,0],[5,0,5,8]],
            "exits":[{"id":"w","portal":[0,4,0,6],"label":"west"}],
            "starts":[[8,2]],"guiding_lines":{},"exit_signs":[],"floor_plan_posts":[]}"#;
        let s = load_scenario(doc).unwrap();
        let from = Vec2::new(8.0, 2.0);
        let path = s.shortest_path(from, &s.exits[0], 0.3).unwrap();
        assert!(path.len() >= 3);
        // around the partition tip at (5, 8) with 0.3 m clearance
        let lower = from.distance(Vec2::new(5.0, 8.3)) + Vec2::new(5.0, 8.3).distance(Vec2::new(0.0, 5.0));
        assert!(path.length() >= lower - 0.05, "{}", path.length());
        assert!(path.length() <= lower + 0.1, "{}", path.length());
        for p in path.resample(0.01) {
            assert!(s.wall_clearance(p) >= 0.3 - 1e-6);
        }
    }

    #[test]
    fn unreachable_exit_reported() {
        let doc = r#"{"id":"closed","bounds":{"min":[-1,-1],"max":[11,11]},
            "walls":[[0,0,10,0],[10,0,10,10],[10,10,0,10],[0,10,0,6],[0,4,0,0],[3,0,3,10]],
            "exits":[{"id":"w","portal":[0,4,0,6],"label":"west"}],
            "starts":[[8,2]],"guiding_lines":{},"exit_signs":[],"floor_plan_posts":[]}"#;
        let s = load_scenario(doc).unwrap();
        assert!(matches!(
            s.shortest_path(Vec2::new(8.0, 2.0), &s.exits[0], 0.25),
            Err(ScenarioError::Unreachable(_))
        ));
        assert!(matches!(
            s.nearest_exit(Vec2::new(8.0, 2.0)),
            Err(ScenarioError::NoExitReachable { .. })
        ));
    }

    #[test]
    fn sign_visibility_cone_and_range() {
        let s = corridor(20.0);
        let sign = SignPlacement {
            position: Vec2::new(10.0, 1.0),
            facing: Vec2::new(-1.0, 0.0),
            arrow_direction: Vec2::new(1.0, 0.0),
            visibility_range: 5.0,
        };
        assert!(s.sign_visible_from(&sign, Vec2::new(7.0, 1.0)));
        assert!(!s.sign_visible_from(&sign, Vec2::new(13.0, 1.0)), "behind the sign");
        assert!(!s.sign_visible_from(&sign, Vec2::new(4.0, 1.0)), "out of range");
    }

    #[test]
    fn crossing_detection() {
        let s = corridor(20.0);
        assert_eq!(s.crossed_exit(Vec2::new(19.9, 1.0), Vec2::new(20.1, 1.0)), Some(0));
        assert_eq!(s.crossed_exit(Vec2::new(19.0, 1.0), Vec2::new(19.5, 1.0)), None);
    }
}

