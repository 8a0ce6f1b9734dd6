//! Simulated pedestrians: route-choice policies and social-force locomotion.
//!
//! The avatar of the human participant is an [`AgentState`] as well, so the
//! simulated crowd reacts to it exactly as it reacts to any other agent.

mod floor_plan;
mod locomotion;
mod policy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{PathPolyline, Point2, Pose, Vec2};

pub use floor_plan::{branch_options, plan_floor_plan_memory, BranchOption};
pub(crate) use locomotion::keep_off_walls;
pub use locomotion::{social_force_step, step_crowd, SocialForceParams};
pub use policy::{desired_direction, Surroundings};

/// Clearance used when agents plan routes through the building.
pub const ROUTE_CLEARANCE: f64 = 0.4;

pub const MIN_RADIUS: f64 = 0.15;
pub const MAX_RADIUS: f64 = 0.35;
pub const MAX_DESIRED_SPEED: f64 = 3.0;
/// Speed cap as a multiple of the desired speed.
pub const SPEED_CAP_FACTOR: f64 = 1.3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("radius {0} m outside [{MIN_RADIUS}, {MAX_RADIUS}]")]
    Radius(f64),
    #[error("desired speed {0} m/s outside (0, {MAX_DESIRED_SPEED}]")]
    DesiredSpeed(f64),
    #[error("policy parameter out of range: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    GuidingLine,
    ExitSigns,
    FloorPlanMemory,
    FollowOthers,
    ScriptedGoal,
}

/// How an agent decides where to walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RouteChoicePolicy {
    /// Walk along the nearest guiding line toward its exit.
    GuidingLine {
        /// Pull toward the line per meter of lateral offset, in [0, 10].
        lateral_gain: f64,
    },
    /// Head to the nearest readable exit sign, then follow its arrow.
    /// Without any sign seen so far, follow walls keeping them on the right.
    ExitSigns {
        /// A sign counts as reached within this distance, in (0, 5] m.
        approach_radius: f64,
        /// Distance kept from the followed wall while exploring, in [0.3, 2] m.
        wall_distance: f64,
    },
    /// Follow a route memorized from the floor plan, with each junction
    /// decision independently wrong with `error_probability`.
    FloorPlanMemory { error_probability: f64 },
    /// Follow the nearest visible moving agent that is closer to an exit.
    FollowOthers {
        /// Agents slower than this are not considered moving, in [0, 1] m/s.
        min_speed: f64,
        /// After losing sight of the leader, keep its last heading this far, in [0, 10] m.
        carry_distance: f64,
        /// Wall distance while exploring, as for `ExitSigns`.
        wall_distance: f64,
    },
    /// Walk the shortest path to an assigned exit (the nearest when `None`).
    ScriptedGoal { exit_id: Option<String> },
}

impl RouteChoicePolicy {
    pub fn guiding_line() -> Self {
        RouteChoicePolicy::GuidingLine { lateral_gain: 1.0 }
    }

    pub fn exit_signs() -> Self {
        RouteChoicePolicy::ExitSigns {
            approach_radius: 1.5,
            wall_distance: 0.4,
        }
    }

    pub fn floor_plan_memory() -> Self {
        RouteChoicePolicy::FloorPlanMemory {
            error_probability: 0.25,
        }
    }

    pub fn follow_others() -> Self {
        RouteChoicePolicy::FollowOthers {
            min_speed: 0.2,
            carry_distance: 2.0,
            wall_distance: 0.4,
        }
    }

    pub fn scripted_goal(exit_id: Option<String>) -> Self {
        RouteChoicePolicy::ScriptedGoal { exit_id }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            RouteChoicePolicy::GuidingLine { .. } => PolicyKind::GuidingLine,
            RouteChoicePolicy::ExitSigns { .. } => PolicyKind::ExitSigns,
            RouteChoicePolicy::FloorPlanMemory { .. } => PolicyKind::FloorPlanMemory,
            RouteChoicePolicy::FollowOthers { .. } => PolicyKind::FollowOthers,
            RouteChoicePolicy::ScriptedGoal { .. } => PolicyKind::ScriptedGoal,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(AgentError::Policy(what.to_string()))
            }
        };
        match *self {
            RouteChoicePolicy::GuidingLine { lateral_gain } => {
                check((0.0..=10.0).contains(&lateral_gain), "lateral_gain")
            }
            RouteChoicePolicy::ExitSigns {
                approach_radius,
                wall_distance,
            } => {
                check(approach_radius > 0.0 && approach_radius <= 5.0, "approach_radius")?;
                check((0.3..=2.0).contains(&wall_distance), "wall_distance")
            }
            RouteChoicePolicy::FloorPlanMemory { error_probability } => {
                check((0.0..=1.0).contains(&error_probability), "error_probability")
            }
            RouteChoicePolicy::FollowOthers {
                min_speed,
                carry_distance,
                wall_distance,
            } => {
                check((0.0..=1.0).contains(&min_speed), "min_speed")?;
                check((0.0..=10.0).contains(&carry_distance), "carry_distance")?;
                check((0.3..=2.0).contains(&wall_distance), "wall_distance")
            }
            RouteChoicePolicy::ScriptedGoal { .. } => Ok(()),
        }
    }
}

/// Per-policy state carried between decisions.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PolicyMemory {
    #[default]
    Empty,
    /// A planned or memorized route and the arc length reached along it.
    Route {
        path: Arc<PathPolyline>,
        progress: f64,
    },
    Signs {
        /// Sign currently walked toward, with the route to it and the arc
        /// length reached along that route.
        target: Option<(usize, Arc<PathPolyline>, f64)>,
        /// Positions of signs already reached.
        reached: Vec<Point2>,
        /// Arrow of the last reached sign.
        arrow: Option<(Point2, Vec2)>,
    },
    Follow {
        leader: Option<u32>,
        last_seen: Option<Point2>,
        last_heading: Option<Vec2>,
        /// Distance walked on the carried heading since reaching `last_seen`.
        carried: f64,
        last_position: Point2,
        /// Consecutive decisions with almost no progress.
        stalled: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub position: Point2,
    pub velocity: Vec2,
    pub heading: f64,
    pub radius: f64,
    pub desired_speed: f64,
    pub policy: RouteChoicePolicy,
    pub memory: PolicyMemory,
    pub is_human_avatar: bool,
    /// Index of the wall followed while exploring.
    pub followed_wall: Option<usize>,
}

impl AgentState {
    pub fn new(
        id: u32,
        position: Point2,
        heading: f64,
        radius: f64,
        desired_speed: f64,
        policy: RouteChoicePolicy,
    ) -> Result<AgentState, AgentError> {
        if !(MIN_RADIUS..=MAX_RADIUS).contains(&radius) {
            return Err(AgentError::Radius(radius));
        }
        if !(desired_speed > 0.0 && desired_speed <= MAX_DESIRED_SPEED) {
            return Err(AgentError::DesiredSpeed(desired_speed));
        }
        policy.validate()?;
        Ok(AgentState {
            id,
            position,
            velocity: Vec2::ZERO,
            heading: crate::geometry::wrap_angle(heading),
            radius,
            desired_speed,
            policy,
            memory: PolicyMemory::Empty,
            is_human_avatar: false,
            followed_wall: None,
        })
    }

    pub fn speed(&self) -> f64 {
        self.velocity.length()
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.heading)
    }

    pub fn heading_vector(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_invariants_enforced() {
        let p = RouteChoicePolicy::guiding_line();
        assert!(AgentState::new(0, Vec2::ZERO, 0.0, 0.25, 1.1, p.clone()).is_ok());
        assert_eq!(
            AgentState::new(0, Vec2::ZERO, 0.0, 0.5, 1.1, p.clone()).unwrap_err(),
            AgentError::Radius(0.5)
        );
        assert_eq!(
            AgentState::new(0, Vec2::ZERO, 0.0, 0.25, 0.0, p).unwrap_err(),
            AgentError::DesiredSpeed(0.0)
        );
        let bad = RouteChoicePolicy::FloorPlanMemory {
            error_probability: 1.5,
        };
        assert!(AgentState::new(0, Vec2::ZERO, 0.0, 0.25, 1.0, bad).is_err());
    }

    #[test]
    fn policy_serializes_with_kind_tag() {
        let json = serde_json::to_string(&RouteChoicePolicy::exit_signs()).unwrap();
        assert!(json.contains(r#""kind":"exit_signs""#), "{json}");
        let back: RouteChoicePolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back.kind(), PolicyKind::ExitSigns);
    }
}
