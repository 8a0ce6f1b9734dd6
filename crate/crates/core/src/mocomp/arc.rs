use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use super::{Workspace, WorkspaceShape};
use crate::geometry::{Point2, Pose, Vec2};

/// Below this total turn an arc is treated as a straight segment when
/// looking for interior extremes.
const STRAIGHT_TURN: f64 = 1e-9;

/// sin(x)/x, accurate near zero.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Pose reached after moving `s` along a circle of curvature `kappa`
/// (positive turns left) from `start`.
pub fn advance(start: Pose, kappa: f64, s: f64) -> Pose {
    let turn = kappa * s;
    let chord = s * sinc(turn / 2.0);
    let dir = Vec2::from_angle(start.heading + turn / 2.0);
    Pose::new(start.position + dir * chord, start.heading + turn)
}

/// Constant-curvature piece of a compressed path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    /// Signed curvature, 1/m; positive turns left.
    pub curvature: f64,
    pub length: f64,
    pub start_pose: Pose,
}

impl Arc {
    pub fn pose_at(&self, s: f64) -> Pose {
        advance(self.start_pose, self.curvature, s.clamp(0.0, self.length))
    }

    pub fn end_pose(&self) -> Pose {
        self.pose_at(self.length)
    }

    /// Arc-length positions (within the arc) where the tangent heading
    /// equals `psi` modulo 2π.
    fn where_heading(&self, psi: f64) -> impl Iterator<Item = f64> + '_ {
        let k = self.curvature;
        let first = if k.abs() * self.length < STRAIGHT_TURN {
            None
        } else {
            let delta = (psi - self.start_pose.heading) * k.signum();
            Some(delta.rem_euclid(TAU) / k.abs())
        };
        let period = TAU / k.abs();
        std::iter::successors(first, move |s| Some(s + period)).take_while(move |&s| s <= self.length)
    }

    /// Whether every point of the arc lies inside the workspace inset by
    /// its margin, allowing `tolerance` of overshoot.
    pub fn contained_in(&self, workspace: &Workspace, tolerance: f64) -> bool {
        let inside = |p: Point2| workspace.inset_contains(p, tolerance);
        if !inside(self.start_pose.position) || !inside(self.end_pose().position) {
            return false;
        }
        match workspace.shape {
            WorkspaceShape::Rectangle { .. } => {
                // axis extremes sit where the tangent is axis-aligned
                for k in 0..4 {
                    let psi = k as f64 * FRAC_PI_2;
                    if let Some(s) = self.where_heading(psi).next() {
                        if !inside(self.pose_at(s).position) {
                            return false;
                        }
                    }
                }
                true
            }
            WorkspaceShape::Disc { .. } => {
                if self.curvature.abs() * self.length < STRAIGHT_TURN {
                    return true;
                }
                // farthest circle point from the disc centre lies along the
                // centre offset; its tangent is perpendicular to that offset
                let left = Vec2::from_angle(self.start_pose.heading).perp();
                let center = self.start_pose.position + left / self.curvature;
                let offset = center - workspace.origin;
                let away = offset.try_normalize().unwrap_or(left);
                let psi = away.angle() + self.curvature.signum() * FRAC_PI_2;
                match self.where_heading(psi).next() {
                    Some(s) => inside(self.pose_at(s).position),
                    None => true,
                }
            }
        }
    }
}
