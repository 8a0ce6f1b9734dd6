//! Motion compression: fitting a long path in the virtual building into a
//! small tracked room.
//!
//! Every straight segment of the target path becomes a constant-curvature
//! arc of the same length in the room, and the heading change at each
//! waypoint is kept. The user walks the arcs while the rendered view is
//! rotated so that, in the building, the avatar walks straight.

mod arc;
mod solver;

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, PathPolyline, Point2, Pose, Vec2};
use crate::scenario::Scenario;

pub use arc::{advance, Arc};
pub use solver::SolverOptions;

/// Cross-track gain of the guidance rotation, rad per meter.
pub const CROSS_TRACK_GAIN: f64 = 0.5;
/// Bound on the cross-track part of the guidance rotation, rad.
pub const CROSS_TRACK_LIMIT: f64 = 0.2;
/// Replan when the predicted target path moves by more than this (Hausdorff), m.
pub const REPLAN_DISTANCE: f64 = 0.5;
/// Search budget for replanning during a live run, where a plan is
/// needed within a tick or two.
const LIVE_NODE_BUDGET: usize = 5_000;
/// Smallest disc the inset workspace must hold.
pub const MIN_WORKSPACE_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MocompError {
    #[error("target path needs at least two vertices")]
    TooFewVertices,
    #[error("invalid workspace: {0}")]
    Workspace(String),
    #[error("no curvature assignment with |kappa| <= {kappa_max} keeps the path inside the workspace")]
    Infeasible { kappa_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkspaceShape {
    Rectangle { width: f64, height: f64 },
    Disc { radius: f64 },
}

/// Physical tracking region. `origin` is the centre of the shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub shape: WorkspaceShape,
    pub origin: Point2,
    /// Safety inset from the boundary, m.
    pub margin: f64,
}

impl Workspace {
    pub fn new(shape: WorkspaceShape, origin: Point2, margin: f64) -> Result<Self, MocompError> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(MocompError::Workspace(format!("margin {margin} must be >= 0")));
        }
        let smallest = match shape {
            WorkspaceShape::Rectangle { width, height } => width.min(height),
            WorkspaceShape::Disc { radius } => 2.0 * radius,
        };
        if !(smallest > 2.0 * margin) || !smallest.is_finite() {
            return Err(MocompError::Workspace(format!(
                "dimensions must exceed twice the margin {margin}"
            )));
        }
        Ok(Workspace {
            shape,
            origin,
            margin,
        })
    }

    pub fn rectangle(width: f64, height: f64, origin: Point2, margin: f64) -> Result<Self, MocompError> {
        Workspace::new(WorkspaceShape::Rectangle { width, height }, origin, margin)
    }

    pub fn disc(radius: f64, origin: Point2, margin: f64) -> Result<Self, MocompError> {
        Workspace::new(WorkspaceShape::Disc { radius }, origin, margin)
    }

    /// Radius of the largest disc inside the inset region.
    pub fn inscribed_radius(&self) -> f64 {
        match self.shape {
            WorkspaceShape::Rectangle { width, height } => 0.5 * width.min(height) - self.margin,
            WorkspaceShape::Disc { radius } => radius - self.margin,
        }
    }

    /// Pose on the circle of radius `1 / kappa_max` around the origin,
    /// heading counter-clockwise: a start from which arbitrarily long
    /// segments fit.
    pub fn circling_start(&self, kappa_max: f64) -> Pose {
        Pose::new(self.origin - Vec2::new(0.0, 1.0 / kappa_max), 0.0)
    }

    /// Whether `p` lies inside the region inset by the margin, allowing
    /// `tolerance` of overshoot (negative values demand extra room).
    pub fn inset_contains(&self, p: Point2, tolerance: f64) -> bool {
        let d = p - self.origin;
        match self.shape {
            WorkspaceShape::Rectangle { width, height } => {
                d.x.abs() <= 0.5 * width - self.margin + tolerance
                    && d.y.abs() <= 0.5 * height - self.margin + tolerance
            }
            WorkspaceShape::Disc { radius } => d.length() <= radius - self.margin + tolerance,
        }
    }
}

/// One user step: distance walked and heading change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub forward: f64,
    pub turn: f64,
}

/// The user-room counterpart of a target path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedPath {
    pub arcs: Vec<Arc>,
    pub total_length: f64,
    /// Heading change at each interior waypoint, equal to the target's.
    pub waypoint_turns: Vec<f64>,
}

impl CompressedPath {
    /// Index of the arc containing `s` and the offset into it; at a
    /// waypoint the following arc wins.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let mut start = 0.0;
        for (i, arc) in self.arcs.iter().enumerate() {
            if s < start + arc.length || i + 1 == self.arcs.len() {
                return (i, (s - start).clamp(0.0, arc.length));
            }
            start += arc.length;
        }
        (0, 0.0)
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        let (i, local) = self.locate(s);
        self.arcs[i].pose_at(local)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.arcs[self.locate(s).0].curvature
    }

    pub fn start_pose(&self) -> Pose {
        self.arcs[0].start_pose
    }

    pub fn end_pose(&self) -> Pose {
        self.arcs[self.arcs.len() - 1].end_pose()
    }

    /// Σ κ², the quantity the solver minimizes.
    pub fn cost(&self) -> f64 {
        self.arcs.iter().map(|a| a.curvature * a.curvature).sum()
    }

    /// Arc-length start of every arc.
    pub fn arc_starts(&self) -> Vec<f64> {
        self.arcs
            .iter()
            .scan(0.0, |acc, a| {
                let s = *acc;
                *acc += a.length;
                Some(s)
            })
            .collect()
    }

    /// Poses every `spacing` meters, always including both ends.
    pub fn sample(&self, spacing: f64) -> Vec<(f64, Pose)> {
        let n = (self.total_length / spacing).ceil().max(1.0) as usize;
        (0..=n)
            .map(|k| {
                let s = (k as f64 * spacing).min(self.total_length);
                (s, self.pose_at(s))
            })
            .collect()
    }

    /// Integral of the curvature over `[from, to]` (either order); zero
    /// beyond the ends of the path.
    pub fn turn_between(&self, from: f64, to: f64) -> f64 {
        let (lo, hi, sign) = if from <= to { (from, to, 1.0) } else { (to, from, -1.0) };
        let mut start = 0.0;
        let mut total = 0.0;
        for arc in &self.arcs {
            let end = start + arc.length;
            let a = lo.max(start);
            let b = hi.min(end);
            if b > a {
                total += arc.curvature * (b - a);
            }
            start = end;
        }
        sign * total
    }
}

/// Maps `target` into `workspace`, starting at `user_start`, with the
/// default solver options.
pub fn transform_path(
    target: &PathPolyline,
    workspace: &Workspace,
    user_start: Pose,
) -> Result<CompressedPath, MocompError> {
    transform_path_with(target, workspace, user_start, &SolverOptions::default())
}

pub fn transform_path_with(
    target: &PathPolyline,
    workspace: &Workspace,
    user_start: Pose,
    options: &SolverOptions,
) -> Result<CompressedPath, MocompError> {
    if target.segment_count() == 0 {
        return Err(MocompError::TooFewVertices);
    }
    if workspace.inscribed_radius() < MIN_WORKSPACE_RADIUS {
        return Err(MocompError::Workspace(format!(
            "inset region must hold a disc of radius {MIN_WORKSPACE_RADIUS} m"
        )));
    }
    let lengths: Vec<f64> = target.segments().map(|s| s.length()).collect();
    let turns = target.turning_angles();
    let problem = solver::Problem {
        lengths,
        turns: turns.clone(),
        start: user_start,
        workspace,
    };
    let kappas = solver::solve(&problem, options).ok_or(MocompError::Infeasible {
        kappa_max: options.kappa_max,
    })?;
    let arcs = problem.arcs(&kappas);
    Ok(CompressedPath {
        total_length: arcs.iter().map(|a| a.length).sum(),
        arcs,
        waypoint_turns: turns,
    })
}

/// Compresses `target` letting the solver also pick where the user starts.
///
/// Candidate starts are tried in a fixed order and the first feasible one
/// is used: the circling start first, then a 9 × 9 lattice over the inset
/// workspace (nearest the origin first) with 16 headings each.
pub fn transform_path_free_start(
    target: &PathPolyline,
    workspace: &Workspace,
    options: &SolverOptions,
) -> Result<CompressedPath, MocompError> {
    let first = transform_path_with(target, workspace, workspace.circling_start(options.kappa_max), options);
    if !matches!(first, Err(MocompError::Infeasible { .. })) {
        return first;
    }
    let (hx, hy) = match workspace.shape {
        WorkspaceShape::Rectangle { width, height } => {
            (0.5 * width - workspace.margin, 0.5 * height - workspace.margin)
        }
        WorkspaceShape::Disc { radius } => (radius - workspace.margin, radius - workspace.margin),
    };
    let mut lattice: Vec<Vec2> = (-4..=4)
        .flat_map(|i| (-4..=4).map(move |j| Vec2::new(hx * i as f64 / 5.0, hy * j as f64 / 5.0)))
        .filter(|&d| workspace.inset_contains(workspace.origin + d, 0.0))
        .collect();
    lattice.sort_by(|a, b| a.length().total_cmp(&b.length()).then(a.angle().total_cmp(&b.angle())));
    for d in lattice {
        for k in 0..16 {
            let start = Pose::new(workspace.origin + d, k as f64 * std::f64::consts::TAU / 16.0);
            match transform_path_with(target, workspace, start, options) {
                Err(MocompError::Infeasible { .. }) => continue,
                other => return other,
            }
        }
    }
    first
}

/// Rotation of the rendered view relative to the physical heading at
/// progress `s`: the heading offset between the two paths, plus a bounded
/// correction steering the user back toward the compressed path.
/// Positive is counter-clockwise.
pub fn guidance_rotation(
    user_pose: Pose,
    compressed: &CompressedPath,
    target: &PathPolyline,
    s: f64,
) -> f64 {
    guidance_rotation_with_gain(user_pose, compressed, target, s, CROSS_TRACK_GAIN)
}

pub fn guidance_rotation_with_gain(
    user_pose: Pose,
    compressed: &CompressedPath,
    target: &PathPolyline,
    s: f64,
    gain: f64,
) -> f64 {
    let s = s.clamp(0.0, compressed.total_length);
    let on_path = compressed.pose_at(s);
    let base = wrap_angle(on_path.heading - target.heading_at(s));
    let left = Vec2::from_angle(on_path.heading).perp();
    let offset = (user_pose.position - on_path.position).dot(left);
    let correction = (-gain * offset).clamp(-CROSS_TRACK_LIMIT, CROSS_TRACK_LIMIT);
    base + correction
}

/// Avatar motion for one user step taken at progress `s` along the
/// compressed path: the distance is kept and the turn the path curvature
/// induced over the step is removed.
pub fn map_user_motion(compressed: &CompressedPath, s: f64, step: Step) -> Step {
    Step {
        forward: step.forward,
        turn: step.turn - compressed.turn_between(s, s + step.forward),
    }
}

/// Applies a step to a pose, turning at a constant rate along the way.
pub fn apply_step(pose: Pose, step: Step) -> Pose {
    if step.forward.abs() < 1e-12 {
        return Pose::new(pose.position, pose.heading + step.turn);
    }
    advance(pose, step.turn / step.forward, step.forward)
}

/// Tracks progress along a compressed path while mapping user steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMapper {
    compressed: CompressedPath,
    progress: f64,
}

impl MotionMapper {
    pub fn new(compressed: CompressedPath) -> Self {
        MotionMapper {
            compressed,
            progress: 0.0,
        }
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn compressed(&self) -> &CompressedPath {
        &self.compressed
    }

    pub fn map(&mut self, step: Step) -> Step {
        let out = map_user_motion(&self.compressed, self.progress, step);
        self.progress = (self.progress + step.forward).clamp(0.0, self.compressed.total_length);
        out
    }
}

/// Expected avatar route: the shortest path toward `goal` cut at
/// `horizon`, or a straight ray along the heading without a goal.
pub fn predict_target_path(
    scenario: &Scenario,
    avatar: Pose,
    goal: Option<Point2>,
    horizon: f64,
    clearance: f64,
) -> PathPolyline {
    let ray = || {
        PathPolyline::from_points_dedup(
            [avatar.position, avatar.position + avatar.direction() * horizon],
            1e-12,
        )
    };
    match goal.and_then(|g| scenario.shortest_path_to_point(avatar.position, g, clearance)) {
        Some(path) if path.segment_count() > 0 => path.truncate(horizon),
        Some(_) => ray(),
        None => ray(),
    }
}

#[derive(Debug, Clone)]
struct Plan {
    target: PathPolyline,
    mapper: MotionMapper,
}

/// Keeps a compressed path for the current predicted target path,
/// replanning when the prediction changes noticeably.
#[derive(Debug, Clone)]
pub struct Compressor {
    workspace: Workspace,
    options: SolverOptions,
    plan: Option<Plan>,
}

impl Compressor {
    pub fn new(workspace: Workspace) -> Self {
        Compressor {
            workspace,
            options: SolverOptions {
                node_budget: LIVE_NODE_BUDGET,
                ..SolverOptions::default()
            },
            plan: None,
        }
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    /// Offers a new predicted target path starting at the avatar. Returns
    /// whether a new compressed path was computed.
    pub fn update_target(&mut self, target: &PathPolyline, user_pose: Pose) -> Result<bool, MocompError> {
        if let Some(plan) = &self.plan {
            let remaining = plan.target.suffix(plan.mapper.progress());
            if remaining.segment_count() > 0 && remaining.hausdorff(target, 0.05) <= REPLAN_DISTANCE {
                return Ok(false);
            }
        }
        let compressed = transform_path_with(target, &self.workspace, user_pose, &self.options)?;
        self.plan = Some(Plan {
            target: target.clone(),
            mapper: MotionMapper::new(compressed),
        });
        Ok(true)
    }

    /// Maps a user step; without a plan the step passes through unchanged.
    pub fn map_step(&mut self, step: Step) -> Step {
        match &mut self.plan {
            Some(plan) => plan.mapper.map(step),
            None => step,
        }
    }

    pub fn guidance(&self, user_pose: Pose) -> f64 {
        match &self.plan {
            Some(plan) => guidance_rotation(
                user_pose,
                plan.mapper.compressed(),
                &plan.target,
                plan.mapper.progress(),
            ),
            None => 0.0,
        }
    }

    pub fn compressed(&self) -> Option<&CompressedPath> {
        self.plan.as_ref().map(|p| p.mapper.compressed())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly(points: &[[f64; 2]]) -> PathPolyline {
        PathPolyline::new(points.iter().map(|p| Vec2::new(p[0], p[1])).collect()).unwrap()
    }

    #[test]
    fn workspace_invariants() {
        assert!(Workspace::rectangle(4.0, 4.0, Vec2::ZERO, 0.1).is_ok());
        assert!(Workspace::rectangle(0.2, 4.0, Vec2::ZERO, 0.1).is_err());
        assert!(Workspace::disc(1.0, Vec2::ZERO, -0.1).is_err());
    }

    #[test]
    fn target_inside_workspace_is_kept_straight() {
        let ws = Workspace::rectangle(4.0, 4.0, Vec2::ZERO, 0.1).unwrap();
        let target = poly(&[[-1.5, -1.5], [1.5, -1.5], [1.5, 1.5]]);
        let start = Pose::new(Vec2::new(-1.5, -1.5), 0.0);
        let c = transform_path(&target, &ws, start).unwrap();
        assert!(c.arcs.iter().all(|a| a.curvature == 0.0));
        assert_relative_eq!(c.end_pose().position.x, 1.5, epsilon = 1e-12);
        assert_relative_eq!(c.end_pose().position.y, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let ws = Workspace::rectangle(4.0, 4.0, Vec2::ZERO, 0.1).unwrap();
        let one = PathPolyline::new(vec![Vec2::ZERO]).unwrap();
        assert_eq!(
            transform_path(&one, &ws, Pose::new(Vec2::ZERO, 0.0)).unwrap_err(),
            MocompError::TooFewVertices
        );
        let tiny = Workspace::rectangle(1.1, 4.0, Vec2::ZERO, 0.1).unwrap();
        assert!(matches!(
            transform_path(&poly(&[[0.0, 0.0], [1.0, 0.0]]), &tiny, Pose::new(Vec2::ZERO, 0.0)),
            Err(MocompError::Workspace(_))
        ));
    }

    #[test]
    fn aligned_straight_path_needs_no_guidance() {
        let ws = Workspace::rectangle(10.0, 4.0, Vec2::ZERO, 0.1).unwrap();
        let target = poly(&[[0.0, 0.0], [4.0, 0.0]]);
        let c = transform_path(&target, &ws, Pose::new(Vec2::new(-2.0, 0.0), 0.0)).unwrap();
        for k in 0..=40 {
            let s = k as f64 * 0.1;
            let user = c.pose_at(s);
            assert_relative_eq!(guidance_rotation(user, &c, &target, s), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lateral_offset_adds_bounded_correction() {
        let ws = Workspace::rectangle(10.0, 4.0, Vec2::ZERO, 0.1).unwrap();
        let target = poly(&[[0.0, 0.0], [4.0, 0.0]]);
        let c = transform_path(&target, &ws, Pose::new(Vec2::new(-2.0, 0.0), 0.0)).unwrap();
        let left = Pose::new(Vec2::new(0.0, 0.1), 0.0);
        assert_relative_eq!(guidance_rotation(left, &c, &target, 2.0), -0.05, epsilon = 1e-12);
        let right = Pose::new(Vec2::new(0.0, -0.1), 0.0);
        assert_relative_eq!(guidance_rotation(right, &c, &target, 2.0), 0.05, epsilon = 1e-12);
        let far = Pose::new(Vec2::new(0.0, 1.0), 0.0);
        assert_relative_eq!(guidance_rotation(far, &c, &target, 2.0), -CROSS_TRACK_LIMIT);
    }

    #[test]
    fn motion_mapping_examples() {
        let straight = CompressedPath {
            arcs: vec![Arc {
                curvature: 0.0,
                length: 5.0,
                start_pose: Pose::new(Vec2::ZERO, 0.0),
            }],
            total_length: 5.0,
            waypoint_turns: vec![],
        };
        let out = map_user_motion(&straight, 1.0, Step { forward: 0.1, turn: 0.0 });
        assert_eq!(out, Step { forward: 0.1, turn: 0.0 });

        let curved = CompressedPath {
            arcs: vec![Arc {
                curvature: 0.5,
                length: 5.0,
                start_pose: Pose::new(Vec2::ZERO, 0.0),
            }],
            total_length: 5.0,
            waypoint_turns: vec![],
        };
        let out = map_user_motion(&curved, 1.0, Step { forward: 0.1, turn: 0.05 });
        assert_relative_eq!(out.forward, 0.1);
        assert_relative_eq!(out.turn, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn prediction_without_goal_is_a_ray() {
        let s = Scenario::hotel();
        let p = predict_target_path(&s, Pose::new(Vec2::new(20.0, 7.0), 0.0), None, 5.0, 0.25);
        assert_eq!(p.vertices(), &[Vec2::new(20.0, 7.0), Vec2::new(25.0, 7.0)]);
    }

    #[test]
    fn prediction_toward_near_goal_stops_there() {
        let s = Scenario::hotel();
        let p = predict_target_path(
            &s,
            Pose::new(Vec2::new(20.0, 7.0), 0.0),
            Some(Vec2::new(23.0, 7.0)),
            5.0,
            0.25,
        );
        assert_relative_eq!(p.length(), 3.0, epsilon = 1e-9);
    }

    #[test]
    fn compressor_replans_only_on_large_changes() {
        let ws = Workspace::rectangle(4.0, 4.0, Vec2::ZERO, 0.1).unwrap();
        let mut c = Compressor::new(ws);
        let user = ws.circling_start(1.0);
        assert!(c.update_target(&poly(&[[0.0, 0.0], [6.0, 0.0]]), user).unwrap());
        assert!(!c.update_target(&poly(&[[0.0, 0.1], [6.0, 0.1]]), user).unwrap());
        assert!(c.update_target(&poly(&[[0.0, 0.0], [0.0, 6.0]]), user).unwrap());
    }
}
