//! Random target paths and sampling oracles for compressed paths.

use std::f64::consts::PI;

use evacsim_core::geometry::{wrap_angle, PathPolyline, Point2, Pose, Vec2};
use evacsim_core::mocomp::{apply_step, map_user_motion, CompressedPath, Step, Workspace, WorkspaceShape};
use rand::Rng;

/// Polyline of 2 to `max_vertices` vertices and total length at most
/// `max_length`, with uniformly random turns.
pub fn random_target_path<R: Rng>(rng: &mut R, max_vertices: usize, max_length: f64) -> PathPolyline {
    let n = rng.gen_range(2..=max_vertices);
    let total = rng.gen_range(1.0..max_length);
    let weights: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.2..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    let mut heading = rng.gen_range(-PI..PI);
    let mut p = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let mut vertices = vec![p];
    for (i, w) in weights.iter().enumerate() {
        if i > 0 {
            heading += rng.gen_range(-0.95 * PI..0.95 * PI);
        }
        p += Vec2::from_angle(heading) * (total * w / sum);
        vertices.push(p);
    }
    PathPolyline::new(vertices).expect("distinct vertices")
}

/// Largest distance by which a point of `path`, sampled every `spacing`
/// meters, leaves the workspace inset by its margin (0 when inside).
pub fn max_overshoot(path: &CompressedPath, workspace: &Workspace, spacing: f64) -> f64 {
    let overshoot = |p: Point2| {
        let d = p - workspace.origin;
        match workspace.shape {
            WorkspaceShape::Rectangle { width, height } => {
                let ox = d.x.abs() - (0.5 * width - workspace.margin);
                let oy = d.y.abs() - (0.5 * height - workspace.margin);
                ox.max(oy).max(0.0)
            }
            WorkspaceShape::Disc { radius } => (d.length() - (radius - workspace.margin)).max(0.0),
        }
    };
    let mut worst = 0.0f64;
    let mut s = 0.0;
    while s < path.total_length {
        worst = worst.max(overshoot(path.pose_at(s).position));
        s += spacing;
    }
    worst.max(overshoot(path.end_pose().position))
}

/// Largest mismatch between the heading jump of `path` at each waypoint
/// and the target's turning angle there.
pub fn max_turn_error(path: &CompressedPath, target: &PathPolyline) -> f64 {
    let turns = target.turning_angles();
    assert_eq!(turns.len() + 1, path.arcs.len());
    path.arcs
        .windows(2)
        .zip(&turns)
        .map(|(w, t)| {
            let jump = w[1].start_pose.heading - w[0].end_pose().heading;
            wrap_angle(jump - t).abs()
        })
        .fold(0.0, f64::max)
}

/// Walks a user exactly along `path` in about `steps` steps, feeding each
/// step through the motion mapping, and returns the avatar position at
/// every waypoint (first and last vertex included). The avatar starts at
/// `avatar_start`.
pub fn track_exactly(path: &CompressedPath, avatar_start: Pose, steps: usize) -> Vec<Point2> {
    let step_len = path.total_length / steps as f64;
    let mut avatar = avatar_start;
    let mut s = 0.0;
    let mut out = vec![avatar.position];
    for (i, arc) in path.arcs.iter().enumerate() {
        let n = (arc.length / step_len).ceil().max(1.0) as usize;
        let ds = arc.length / n as f64;
        for _ in 0..n {
            let user = Step {
                forward: ds,
                turn: arc.curvature * ds,
            };
            let mapped = map_user_motion(path, s, user);
            avatar = apply_step(avatar, mapped);
            s += ds;
        }
        out.push(avatar.position);
        if let Some(&turn) = path.waypoint_turns.get(i) {
            // turning on the spot at the waypoint
            let mapped = map_user_motion(path, s, Step { forward: 0.0, turn });
            avatar = apply_step(avatar, mapped);
        }
    }
    out
}
