use std::sync::Arc;

use rand::Rng;

use super::{plan_floor_plan_memory, AgentState, PolicyMemory, RouteChoicePolicy, ROUTE_CLEARANCE};
use crate::geometry::{PathPolyline, Point2, Vec2};
use crate::scenario::{Scenario, SignPlacement, DEFAULT_CLEARANCE};

/// Look-ahead distance along a followed route.
const ROUTE_LOOKAHEAD: f64 = 0.6;
/// Window ahead of the current progress searched when re-projecting onto a route.
const ROUTE_WINDOW: f64 = 2.0;
const ARROW_CENTERING_GAIN: f64 = 0.5;
const ARROW_CENTERING_LIMIT: f64 = 0.5;
const WALL_FOLLOW_GAIN: f64 = 1.5;
const WALL_FOLLOW_RANGE: f64 = 4.0;
/// Look-ahead time compensating the lag of the velocity behind the desired direction, s.
const WALL_FOLLOW_LEAD: f64 = 0.4;
/// Another wall takes over once closer than this share of the wall distance.
const WALL_SWITCH_SHARE: f64 = 0.75;
/// The followed wall is dropped once this much farther than the wall distance.
const WALL_LOST_MARGIN: f64 = 1.0;
/// Wall distance of policies that only explore as a fallback.
const FALLBACK_WALL_DISTANCE: f64 = 0.4;
const SAME_SIGN: f64 = 0.1;
const LEADER_REACHED: f64 = 0.5;
const STALL_DISTANCE: f64 = 0.02;
const STALL_DECISIONS: u32 = 5;

/// What an agent can perceive besides the other agents: the building and
/// whatever wayfinding aids are active in the current condition.
#[derive(Debug, Clone, Copy)]
pub struct Surroundings<'a> {
    pub scenario: &'a Scenario,
    pub guiding_lines: &'a [PathPolyline],
    pub signs: &'a [SignPlacement],
}

impl<'a> Surroundings<'a> {
    pub fn bare(scenario: &'a Scenario) -> Self {
        Surroundings {
            scenario,
            guiding_lines: &[],
            signs: &[],
        }
    }
}

/// Unit vector the agent wants to walk along, updating its policy memory.
///
/// Always defined: every policy falls back to exploring by wall following.
pub fn desired_direction<R: Rng + ?Sized>(
    agent: &mut AgentState,
    env: &Surroundings<'_>,
    world: &[AgentState],
    rng: &mut R,
) -> Vec2 {
    let dir = match agent.policy.clone() {
        RouteChoicePolicy::GuidingLine { lateral_gain } => guiding_line(agent, env, lateral_gain),
        RouteChoicePolicy::ExitSigns {
            approach_radius,
            wall_distance,
        } => exit_signs(agent, env, approach_radius, wall_distance),
        RouteChoicePolicy::FloorPlanMemory { error_probability } => {
            if !matches!(agent.memory, PolicyMemory::Route { .. }) {
                let path = plan_floor_plan_memory(
                    env.scenario,
                    agent.position,
                    error_probability,
                    ROUTE_CLEARANCE,
                    rng,
                );
                agent.memory = PolicyMemory::Route {
                    path: Arc::new(path),
                    progress: 0.0,
                };
            }
            follow_memorized_route(agent)
        }
        RouteChoicePolicy::FollowOthers {
            min_speed,
            carry_distance,
            wall_distance,
        } => follow_others(agent, env, world, min_speed, carry_distance, wall_distance),
        RouteChoicePolicy::ScriptedGoal { exit_id } => {
            if !matches!(agent.memory, PolicyMemory::Route { .. }) {
                match plan_goal(env.scenario, agent.position, exit_id.as_deref()) {
                    Some(path) => {
                        agent.memory = PolicyMemory::Route {
                            path: Arc::new(path),
                            progress: 0.0,
                        }
                    }
                    None => return wall_following(agent, env.scenario, FALLBACK_WALL_DISTANCE),
                }
            }
            follow_memorized_route(agent)
        }
    };
    dir.try_normalize().unwrap_or_else(|| agent.heading_vector())
}

fn plan_goal(scenario: &Scenario, from: Point2, exit_id: Option<&str>) -> Option<PathPolyline> {
    let exit = match exit_id {
        Some(id) => scenario.exit(id)?,
        None => scenario.nearest_exit_with_clearance(from, ROUTE_CLEARANCE).ok()?.0,
    };
    scenario.shortest_path(from, exit, ROUTE_CLEARANCE).ok()
}

fn follow_memorized_route(agent: &mut AgentState) -> Vec2 {
    let heading = agent.heading_vector();
    let PolicyMemory::Route { path, progress } = &mut agent.memory else {
        return heading;
    };
    follow_route(agent.position, path, progress, heading)
}

/// Pure-pursuit along a polyline with monotone progress.
pub(crate) fn follow_route(p: Point2, path: &PathPolyline, progress: &mut f64, fallback: Vec2) -> Vec2 {
    if path.segment_count() == 0 {
        return fallback;
    }
    let (s, _) = path.project_within(p, *progress, *progress + ROUTE_WINDOW);
    *progress = progress.max(s);
    let target_s = *progress + ROUTE_LOOKAHEAD;
    if target_s >= path.length() {
        let to_end = path.last() - p;
        if to_end.length() > 0.05 && to_end.dot(path.tangent_at(path.length())) > 0.0 {
            return to_end;
        }
        return path.tangent_at(path.length());
    }
    (path.point_at(target_s) - p)
        .try_normalize()
        .unwrap_or_else(|| path.tangent_at(*progress))
}

fn guiding_line(agent: &mut AgentState, env: &Surroundings<'_>, gain: f64) -> Vec2 {
    let p = agent.position;
    let nearest = env
        .guiding_lines
        .iter()
        .map(|line| (line, line.project(p)))
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1));
    match nearest {
        Some((line, (s, _))) if line.segment_count() > 0 => {
            let q = line.point_at(s);
            line.tangent_at(s) + (q - p) * gain
        }
        _ => wall_following(agent, env.scenario, FALLBACK_WALL_DISTANCE),
    }
}

fn exit_signs(agent: &mut AgentState, env: &Surroundings<'_>, approach_radius: f64, wall_distance: f64) -> Vec2 {
    let p = agent.position;
    if !matches!(agent.memory, PolicyMemory::Signs { .. }) {
        agent.memory = PolicyMemory::Signs {
            target: None,
            reached: Vec::new(),
            arrow: None,
        };
    }
    let PolicyMemory::Signs {
        target,
        reached,
        arrow,
    } = &mut agent.memory
    else {
        unreachable!()
    };
    let is_reached = |pos: Point2, reached: &[Point2]| reached.iter().any(|r| r.distance(pos) < SAME_SIGN);

    // a sign once seen is walked to, unless a nearer unread one comes into view
    let candidate = env
        .signs
        .iter()
        .enumerate()
        .filter(|(_, s)| !is_reached(s.position, reached) && env.scenario.sign_visible_from(s, p))
        .min_by(|a, b| {
            p.distance(a.1.position)
                .total_cmp(&p.distance(b.1.position))
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i);
    if let Some(i) = candidate {
        let current = target.as_ref().map(|t| t.0);
        let nearer = current.is_none_or(|j| {
            j >= env.signs.len() || p.distance(env.signs[i].position) < p.distance(env.signs[j].position)
        });
        if current != Some(i) && nearer {
            let to = env.signs[i].position;
            let route = env
                .scenario
                .shortest_path_to_point(p, to, DEFAULT_CLEARANCE)
                .unwrap_or_else(|| PathPolyline::from_points_dedup([p, to], 1e-9));
            *target = Some((i, Arc::new(route), 0.0));
        }
    }
    if let Some((i, route, progress)) = target {
        let sign = env.signs[*i];
        if p.distance(sign.position) <= approach_radius {
            reached.push(sign.position);
            *arrow = Some((sign.position, sign.arrow_direction));
            *target = None;
        } else {
            return follow_route(p, route, progress, sign.position - p);
        }
    }
    if let Some((origin, a)) = *arrow {
        let offset = p - origin;
        let lateral = offset - a * offset.dot(a);
        let correction = lateral * ARROW_CENTERING_GAIN;
        let correction = if correction.length() > ARROW_CENTERING_LIMIT {
            correction.normalize_or_zero() * ARROW_CENTERING_LIMIT
        } else {
            correction
        };
        return a - correction;
    }
    wall_following(agent, env.scenario, wall_distance)
}

fn follow_others(
    agent: &mut AgentState,
    env: &Surroundings<'_>,
    world: &[AgentState],
    min_speed: f64,
    carry_distance: f64,
    wall_distance: f64,
) -> Vec2 {
    let p = agent.position;
    let scenario = env.scenario;
    if !matches!(agent.memory, PolicyMemory::Follow { .. }) {
        agent.memory = PolicyMemory::Follow {
            leader: None,
            last_seen: None,
            last_heading: None,
            carried: 0.0,
            last_position: p,
            stalled: 0,
        };
    }
    let field = scenario.distance_field();
    let own_distance = field.distance(scenario, p);
    let leader = world
        .iter()
        .filter(|o| o.id != agent.id && o.speed() >= min_speed)
        .filter(|o| scenario.bounds.contains(o.position))
        .filter(|o| scenario.line_of_sight_unchecked(p, o.position))
        .filter(|o| field.distance(scenario, o.position) < own_distance)
        .min_by(|a, b| {
            p.distance(a.position)
                .total_cmp(&p.distance(b.position))
                .then(a.id.cmp(&b.id))
        });

    let PolicyMemory::Follow {
        leader: leader_id,
        last_seen,
        last_heading,
        carried,
        last_position,
        stalled,
    } = &mut agent.memory
    else {
        unreachable!()
    };
    let moved = p.distance(*last_position);
    *last_position = p;
    *stalled = if moved < STALL_DISTANCE { *stalled + 1 } else { 0 };
    if *stalled >= STALL_DECISIONS {
        // pressing into a wall: give up on the memory of the leader
        *last_seen = None;
        *last_heading = None;
        *leader_id = None;
    }

    if let Some(o) = leader {
        *leader_id = Some(o.id);
        *last_seen = Some(o.position);
        *last_heading = o.velocity.try_normalize();
        *carried = 0.0;
        return (o.position - p)
            .try_normalize()
            .unwrap_or_else(|| o.velocity.normalize_or_zero());
    }
    if let Some(seen) = *last_seen {
        if p.distance(seen) > LEADER_REACHED && scenario.line_of_sight_unchecked(p, seen) {
            return seen - p;
        }
        *last_seen = None;
        *carried = 0.0;
    } else if last_heading.is_some() {
        *carried += moved;
    }
    if let Some(h) = *last_heading {
        if *carried < carry_distance {
            return h;
        }
        *last_heading = None;
        *leader_id = None;
    }
    wall_following(agent, scenario, wall_distance)
}

/// Exploration heading: walk along a wall keeping it on the right,
/// steering to hold `wall_distance` from it. The followed wall is kept
/// while rounding its ends, so a door narrower than twice the distance is
/// still entered; another wall takes over only when it comes clearly
/// closer or the followed one is lost.
pub(crate) fn wall_following(agent: &mut AgentState, scenario: &Scenario, wall_distance: f64) -> Vec2 {
    // steer from where the body will be once the velocity has caught up
    let p = agent.position + agent.velocity * WALL_FOLLOW_LEAD;
    let distance = |i: usize| scenario.walls[i].distance_to_point(p);
    let nearest = (0..scenario.walls.len())
        .map(|i| (i, distance(i)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let Some((nearest, nearest_d)) = nearest.filter(|&(_, d)| d < WALL_FOLLOW_RANGE) else {
        agent.followed_wall = None;
        return agent.heading_vector();
    };
    let wall = match agent.followed_wall {
        Some(i) if i < scenario.walls.len() => {
            let d = distance(i);
            let lost = d > wall_distance + WALL_LOST_MARGIN;
            let blocked = i != nearest && nearest_d < WALL_SWITCH_SHARE * wall_distance;
            if lost || blocked {
                nearest
            } else {
                i
            }
        }
        _ => nearest,
    };
    agent.followed_wall = Some(wall);
    let q = scenario.walls[wall].closest_point(p);
    let d = p.distance(q);
    if d <= 1e-9 {
        return agent.heading_vector();
    }
    let n = (p - q) / d;
    let along = Vec2::new(n.y, -n.x);
    let pull = (WALL_FOLLOW_GAIN * (wall_distance - d)).clamp(-1.0, 1.0);
    along + n * pull
}
