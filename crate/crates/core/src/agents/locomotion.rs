use super::{AgentState, SPEED_CAP_FACTOR};
use crate::geometry::Vec2;
use crate::scenario::Scenario;

const AGENT_RANGE_CUTOFF: f64 = 5.0;
const WALL_RANGE_CUTOFF: f64 = 3.0;
const WALL_PROJECTION_PASSES: usize = 4;
const OVERLAP_PASSES: usize = 3;
const HEADING_MIN_SPEED: f64 = 0.05;
/// Share of the repulsion from someone ahead that is turned into a step to
/// the right, so symmetric encounters resolve.
const SIDESTEP_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialForceParams {
    /// Relaxation time toward the desired velocity, s.
    pub relaxation_time: f64,
    pub agent_strength: f64,
    pub agent_range: f64,
    pub wall_strength: f64,
    pub wall_range: f64,
    /// Longest internal integration step, s.
    pub max_substep: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        SocialForceParams {
            relaxation_time: 0.5,
            agent_strength: 2.0,
            agent_range: 0.3,
            wall_strength: 2.0,
            wall_range: 0.3,
            max_substep: 0.01,
        }
    }
}

impl SocialForceParams {
    fn repulsion(&self, agent: &AgentState, neighbours: &[AgentState], scenario: &Scenario) -> Vec2 {
        let p = agent.position;
        let facing = agent.heading_vector();
        let right = Vec2::new(facing.y, -facing.x);
        let mut force = Vec2::ZERO;
        for other in neighbours {
            if other.id == agent.id {
                continue;
            }
            let offset = p - other.position;
            let d = offset.length();
            if !(1e-12..=AGENT_RANGE_CUTOFF).contains(&d) {
                continue;
            }
            let magnitude =
                self.agent_strength * ((agent.radius + other.radius - d) / self.agent_range).exp();
            let n = offset / d;
            force += n * magnitude;
            if n.dot(facing) < 0.0 {
                force += right * (SIDESTEP_SHARE * magnitude);
            }
        }
        for wall in &scenario.walls {
            let q = wall.closest_point(p);
            let offset = p - q;
            let d = offset.length();
            if !(1e-12..=WALL_RANGE_CUTOFF).contains(&d) {
                continue;
            }
            let magnitude = self.wall_strength * ((agent.radius - d) / self.wall_range).exp();
            force += offset / d * magnitude;
        }
        force
    }
}

/// Advances one agent by `dt` under the social-force model.
///
/// `neighbours` may contain the agent itself; it is skipped by id. Forces
/// from neighbours are evaluated at their current positions.
pub fn social_force_step(
    agent: &mut AgentState,
    desired_direction: Vec2,
    neighbours: &[AgentState],
    scenario: &Scenario,
    dt: f64,
    params: &SocialForceParams,
) {
    if dt <= 0.0 {
        return;
    }
    let n = (dt / params.max_substep).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let e = desired_direction.normalize_or_zero();
    for _ in 0..n {
        let force = params.repulsion(agent, neighbours, scenario);
        integrate(agent, e, force, h, params);
        keep_off_walls(agent, scenario);
    }
}

fn integrate(agent: &mut AgentState, e: Vec2, force: Vec2, h: f64, params: &SocialForceParams) {
    // Trapezoidal rule on the linear relaxation term, explicit on the rest.
    let a = h / (2.0 * params.relaxation_time);
    let drive = e * (agent.desired_speed / params.relaxation_time);
    let mut v = (agent.velocity * (1.0 - a) + (drive + force) * h) / (1.0 + a);
    let cap = SPEED_CAP_FACTOR * agent.desired_speed;
    if v.length() > cap {
        v = v.normalize_or_zero() * cap;
    }
    agent.velocity = v;
    agent.position += v * h;
    update_heading(agent);
}

fn update_heading(agent: &mut AgentState) {
    if agent.velocity.length() > HEADING_MIN_SPEED {
        agent.heading = agent.velocity.angle();
    }
}

/// Pushes the agent out of any wall it overlaps and drops the velocity
/// component pointing into that wall.
pub(crate) fn keep_off_walls(agent: &mut AgentState, scenario: &Scenario) {
    for _ in 0..WALL_PROJECTION_PASSES {
        let mut moved = false;
        for wall in &scenario.walls {
            let q = wall.closest_point(agent.position);
            let offset = agent.position - q;
            let d = offset.length();
            if d >= agent.radius {
                continue;
            }
            let n = match offset.try_normalize() {
                Some(n) => n,
                None => wall.direction().perp(),
            };
            agent.position = q + n * agent.radius;
            let inward = agent.velocity.dot(n);
            if inward < 0.0 {
                agent.velocity -= n * inward;
            }
            moved = true;
        }
        if !moved {
            break;
        }
    }
}

/// Advances a group of agents together by `dt`.
///
/// Agents with `None` desired direction are kinematic: they are not
/// integrated and never displaced, but still repel the others. After
/// integration, remaining body overlaps are resolved by projection.
pub fn step_crowd(
    agents: &mut [AgentState],
    desired: &[Option<Vec2>],
    scenario: &Scenario,
    dt: f64,
    params: &SocialForceParams,
) {
    assert_eq!(agents.len(), desired.len(), "one desired direction per agent");
    if dt <= 0.0 {
        return;
    }
    let n = (dt / params.max_substep).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    for _ in 0..n {
        let forces: Vec<Vec2> = agents
            .iter()
            .map(|a| params.repulsion(a, agents, scenario))
            .collect();
        for ((agent, want), force) in agents.iter_mut().zip(desired).zip(forces) {
            if let Some(dir) = want {
                integrate(agent, dir.normalize_or_zero(), force, h, params);
            }
        }
        resolve_overlaps(agents, desired);
        for (agent, want) in agents.iter_mut().zip(desired) {
            if want.is_some() {
                keep_off_walls(agent, scenario);
            }
        }
    }
}

fn resolve_overlaps(agents: &mut [AgentState], desired: &[Option<Vec2>]) {
    for _ in 0..OVERLAP_PASSES {
        let mut any = false;
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                let (mi, mj) = (desired[i].is_some(), desired[j].is_some());
                if !mi && !mj {
                    continue;
                }
                let offset = agents[j].position - agents[i].position;
                let d = offset.length();
                let overlap = agents[i].radius + agents[j].radius - d;
                if overlap <= 0.0 {
                    continue;
                }
                let n = offset
                    .try_normalize()
                    .unwrap_or_else(|| Vec2::from_angle(0.3 + i as f64 + 2.0 * j as f64));
                let (wi, wj) = match (mi, mj) {
                    (true, true) => (0.5, 0.5),
                    (true, false) => (1.0, 0.0),
                    _ => (0.0, 1.0),
                };
                agents[i].position -= n * (overlap * wi);
                agents[j].position += n * (overlap * wj);
                any = true;
            }
        }
        if !any {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::RouteChoicePolicy;
    use crate::geometry::Point2;
    use crate::scenario::load_scenario;
    use approx::assert_relative_eq;

    fn open() -> Scenario {
        load_scenario(
            r#"{"id":"open","bounds":{"min":[-50,-50],"max":[50,50]},
            "walls":[[40,-1,40,-2],[40,1,40,2]],
            "exits":[{"id":"e","portal":[40,-1,40,1],"label":"gate"}],
            "starts":[[0,0]]}"#,
        )
        .unwrap()
    }

    fn walker(id: u32, at: Point2, speed: f64) -> AgentState {
        AgentState::new(id, at, 0.0, 0.25, speed, RouteChoicePolicy::scripted_goal(None)).unwrap()
    }

    #[test]
    fn free_agent_relaxes_exponentially() {
        let s = open();
        let params = SocialForceParams::default();
        let mut a = walker(0, Vec2::ZERO, 1.2);
        let mut t = 0.0;
        for _ in 0..300 {
            social_force_step(&mut a, Vec2::new(1.0, 0.0), &[], &s, 0.01, &params);
            t += 0.01;
            let exact = 1.2 * (1.0 - (-t / 0.5_f64).exp());
            assert!((a.speed() - exact).abs() <= 0.01 * exact, "t={t}");
        }
    }

    #[test]
    fn agent_at_desired_velocity_stays_there() {
        let s = open();
        let params = SocialForceParams::default();
        let mut a = walker(0, Vec2::ZERO, 1.0);
        a.velocity = Vec2::new(0.0, 1.0);
        social_force_step(&mut a, Vec2::new(0.0, 1.0), &[], &s, 0.5, &params);
        assert_relative_eq!(a.velocity.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(a.position.y, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn head_on_pair_passes_without_overlap() {
        let s = open();
        let params = SocialForceParams::default();
        let mut agents = vec![
            walker(0, Vec2::new(-5.0, 0.0), 1.2),
            walker(1, Vec2::new(5.0, 0.0), 1.2),
        ];
        agents[1].heading = std::f64::consts::PI;
        let desired = [Some(Vec2::new(1.0, 0.0)), Some(Vec2::new(-1.0, 0.0))];
        let mut min_gap = f64::INFINITY;
        for _ in 0..1500 {
            step_crowd(&mut agents, &desired, &s, 0.01, &params);
            let gap = agents[0].position.distance(agents[1].position);
            min_gap = min_gap.min(gap);
        }
        assert!(min_gap >= 0.5 - 1e-9, "min gap {min_gap}");
        assert!(agents[0].position.x > 5.0, "agent 0 at {:?}", agents[0].position);
        assert!(agents[1].position.x < -5.0, "agent 1 at {:?}", agents[1].position);
    }

    #[test]
    fn walls_are_never_penetrated() {
        let s = load_scenario(
            r#"{"id":"box","bounds":{"min":[0,0],"max":[4,4]},
            "walls":[[0,0,4,0],[4,0,4,1],[4,2,4,4],[4,4,0,4],[0,4,0,0]],
            "exits":[{"id":"e","portal":[4,1,4,2],"label":"door"}],
            "starts":[[2,2]]}"#,
        )
        .unwrap();
        let params = SocialForceParams::default();
        let mut a = walker(0, Vec2::new(2.0, 2.0), 1.5);
        for _ in 0..500 {
            social_force_step(&mut a, Vec2::new(-0.3, 1.0), &[], &s, 0.01, &params);
            assert!(s.wall_clearance(a.position) >= a.radius - 1e-9);
        }
    }

    #[test]
    fn kinematic_agent_is_not_displaced() {
        let s = open();
        let params = SocialForceParams::default();
        let mut agents = vec![walker(0, Vec2::ZERO, 1.0), walker(1, Vec2::new(0.3, 0.0), 1.0)];
        let desired = [None, Some(Vec2::new(-1.0, 0.0))];
        step_crowd(&mut agents, &desired, &s, 0.1, &params);
        assert_eq!(agents[0].position, Vec2::ZERO);
        assert!(agents[1].position.distance(Vec2::ZERO) >= 0.5 - 1e-9);
    }
}
