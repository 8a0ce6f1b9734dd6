use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    path_distance, AgentSample, Condition, EngineError, Outcome, RunConfig, RunRecord, Sample,
    AVATAR_RADIUS, MAX_AVATAR_SPEED, MAX_AVATAR_TURN, MAX_TICK, PHYSICS_DT, SCRIPTED_SPEED,
    SUBSTEPS_PER_DECISION, SUBSTEPS_PER_SAMPLE,
};
use crate::agents::{
    desired_direction, keep_off_walls, step_crowd, AgentState, RouteChoicePolicy, SocialForceParams,
    Surroundings, ROUTE_CLEARANCE,
};
use crate::geometry::{wrap_angle, PathPolyline, Point2, Pose, Segment, Vec2};
use crate::mocomp::{apply_step, predict_target_path, Compressor, Step, Workspace};
use crate::scenario::{Scenario, SignDoc, SignPlacement, DEFAULT_CLEARANCE};

const AGENT_RADIUS: f64 = 0.25;
const AGENT_SPEED_RANGE: (f64, f64) = (0.9, 1.3);
const SPAWN_JITTER: f64 = 0.5;
const SPAWN_ATTEMPTS: usize = 500;
const SPAWN_MIN_GAP: f64 = 0.8;
const SPAWN_AVATAR_GAP: f64 = 2.0;
const SPAWN_EXIT_GAP: f64 = 2.0;
/// Length of the predicted avatar route handed to motion compression, m.
const TRACKING_HORIZON: f64 = 10.0;
const AVATAR_ID: u32 = 0;

/// How the avatar moves during a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AvatarInput {
    /// Forward speed (m/s) and turn rate (rad/s), held over the tick.
    Velocity { forward: f64, turn: f64 },
    /// Tracked pose of the user in the physical workspace at the end of the
    /// tick; the motion since the previous pose is mapped through motion
    /// compression.
    Tracked(Pose),
    /// The avatar follows its own route-choice policy at the scripted speed.
    Policy,
}

impl AvatarInput {
    pub const STAND: AvatarInput = AvatarInput::Velocity {
        forward: 0.0,
        turn: 0.0,
    };
}

/// Wayfinding aids shown under the run's condition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlays {
    pub guiding_line: Option<PathPolyline>,
    pub signs: Vec<SignDoc>,
    pub floor_plan_posts: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunState {
    Active,
    Exited { exit_id: String },
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvatarSnapshot {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Immutable copy of the session state between two ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub avatar: AvatarSnapshot,
    pub agents: Vec<AgentPose>,
    pub overlays: Overlays,
    pub run_state: RunState,
    /// View rotation for a tracked user, rad; absent otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_rotation: Option<f64>,
}

struct Tracking {
    compressor: Compressor,
    last_user: Option<Pose>,
    last_replan: Option<u64>,
    guidance: f64,
}

/// A run in progress. Time advances in fixed physics substeps; ticks of any
/// admissible length are split into whole substeps and the remainder is
/// carried over, so the trajectory does not depend on how time is sliced.
pub struct Session {
    config: RunConfig,
    scenario: Arc<Scenario>,
    /// The avatar first, then the simulated agents.
    crowd: Vec<AgentState>,
    desired: Vec<Option<Vec2>>,
    overlays: Overlays,
    guiding_lines: Vec<PathPolyline>,
    signs: Vec<SignPlacement>,
    params: SocialForceParams,
    rng: ChaCha8Rng,
    steps: u64,
    pending: f64,
    samples: Vec<Sample>,
    outcome: Option<Outcome>,
    workspace: Workspace,
    tracking: Option<Tracking>,
}

/// Creates the session for `config`: avatar at its start, the condition's
/// aids in place, recording begun with the sample at t = 0.
pub fn start_run(config: RunConfig, scenario: Arc<Scenario>) -> Result<Session, EngineError> {
    config.validate()?;
    if config.scenario_id != scenario.id {
        return Err(EngineError::ScenarioMismatch {
            record: config.scenario_id.clone(),
            scenario: scenario.id.clone(),
        });
    }
    let start = *scenario
        .start_positions
        .get(config.start_position_index)
        .ok_or(EngineError::InvalidStart {
            index: config.start_position_index,
            available: scenario.start_positions.len(),
        })?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut avatar = AgentState::new(
        AVATAR_ID,
        start,
        heading,
        AVATAR_RADIUS,
        SCRIPTED_SPEED,
        config.condition.scripted_policy(),
    )?;
    avatar.is_human_avatar = true;

    let mut overlays = Overlays::default();
    let mut guiding_lines = Vec::new();
    let mut signs = Vec::new();
    let mut crowd = vec![avatar];
    match config.condition {
        Condition::GuidingLines => {
            let (exit, _) = scenario.nearest_exit(start)?;
            let line = scenario
                .shortest_path(start, exit, ROUTE_CLEARANCE)
                .or_else(|_| scenario.shortest_path(start, exit, DEFAULT_CLEARANCE))?;
            overlays.guiding_line = Some(line.clone());
            guiding_lines.push(line);
        }
        Condition::ExitSigns => {
            signs = scenario.exit_signs.clone();
            overlays.signs = signs.iter().map(SignDoc::from).collect();
        }
        Condition::FloorPlan => overlays.floor_plan_posts = scenario.floor_plan_posts.clone(),
        Condition::SimulatedAgents => {
            crowd.extend(spawn_agents(&scenario, start, config.agent_count, &mut rng)?);
        }
        Condition::None => {}
    }
    let n = crowd.len();
    let mut session = Session {
        config,
        scenario,
        crowd,
        desired: vec![None; n],
        overlays,
        guiding_lines,
        signs,
        params: SocialForceParams::default(),
        rng,
        steps: 0,
        pending: 0.0,
        samples: Vec::new(),
        outcome: None,
        workspace: Workspace::rectangle(4.0, 4.0, Vec2::ZERO, 0.1).expect("valid default workspace"),
        tracking: None,
    };
    session.record_sample(session.time());
    Ok(session)
}

/// Places `count` agents along the routes connecting the exits (or from
/// the start to the only exit), all walking to the exit nearest the
/// avatar's start.
fn spawn_agents(
    scenario: &Scenario,
    start: Point2,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AgentState>, EngineError> {
    let (goal_exit, _) = scenario.nearest_exit(start)?;
    let goal = goal_exit.id.clone();
    let mut routes = Vec::new();
    for (i, a) in scenario.exits.iter().enumerate() {
        for b in &scenario.exits[i + 1..] {
            if let Some(p) = scenario.shortest_path_to_point(a.midpoint(), b.midpoint(), ROUTE_CLEARANCE) {
                routes.push(p);
            }
        }
    }
    if routes.is_empty() {
        routes.push(scenario.shortest_path(start, goal_exit, DEFAULT_CLEARANCE)?);
    }
    routes.retain(|r| r.length() > 0.0);
    let mut agents: Vec<AgentState> = Vec::with_capacity(count);
    for k in 0..count {
        let id = k as u32 + 1;
        let mut placed = None;
        for _ in 0..SPAWN_ATTEMPTS {
            let Some(route) = routes.get(rng.gen_range(0..routes.len().max(1))) else {
                break;
            };
            let s = rng.gen_range(0.0..route.length());
            let lateral = rng.gen_range(-SPAWN_JITTER..SPAWN_JITTER);
            let tangent = route.tangent_at(s);
            let p = route.point_at(s) + tangent.perp() * lateral;
            let ok = scenario.bounds.contains(p)
                && scenario.wall_clearance(p) >= ROUTE_CLEARANCE
                && p.distance(start) >= SPAWN_AVATAR_GAP
                && scenario
                    .exits
                    .iter()
                    .all(|e| e.portal.distance_to_point(p) >= SPAWN_EXIT_GAP)
                && agents.iter().all(|a| a.position.distance(p) >= SPAWN_MIN_GAP)
                && scenario.shortest_path(p, goal_exit, ROUTE_CLEARANCE).is_ok();
            if ok {
                let speed = rng.gen_range(AGENT_SPEED_RANGE.0..AGENT_SPEED_RANGE.1);
                placed = Some(AgentState::new(
                    id,
                    p,
                    tangent.angle(),
                    AGENT_RADIUS,
                    speed,
                    RouteChoicePolicy::scripted_goal(Some(goal.clone())),
                )?);
                break;
            }
        }
        agents.push(placed.ok_or(EngineError::Spawn(id))?);
    }
    Ok(agents)
}

impl Session {
    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    /// Simulated time, s.
    pub fn time(&self) -> f64 {
        self.steps as f64 * PHYSICS_DT
    }

    pub fn is_active(&self) -> bool {
        self.outcome.is_none()
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn avatar(&self) -> &AgentState {
        &self.crowd[0]
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.crowd[1..]
    }

    pub fn overlays(&self) -> &Overlays {
        &self.overlays
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Replaces the route-choice policy used with [`AvatarInput::Policy`].
    pub fn set_avatar_policy(&mut self, policy: RouteChoicePolicy) -> Result<(), EngineError> {
        policy.validate()?;
        let avatar = &mut self.crowd[0];
        avatar.policy = policy;
        avatar.memory = Default::default();
        Ok(())
    }

    /// Turns the avatar to `heading` before the run starts moving.
    pub fn face(&mut self, heading: f64) -> Result<(), EngineError> {
        if self.steps > 0 || self.pending > 0.0 {
            return Err(EngineError::InvalidConfig("the avatar can only be turned before the first tick".into()));
        }
        self.crowd[0].heading = wrap_angle(heading);
        self.record_sample(0.0);
        Ok(())
    }

    /// Physical workspace used for tracked input (4 x 4 m by default).
    pub fn set_workspace(&mut self, workspace: Workspace) {
        self.workspace = workspace;
        self.tracking = None;
    }

    /// Advances the run by `dt` seconds.
    pub fn tick(&mut self, dt: f64, input: AvatarInput) -> Result<(), EngineError> {
        if self.outcome.is_some() {
            return Err(EngineError::RunEnded);
        }
        if !(dt > 0.0 && dt <= MAX_TICK + 1e-12) {
            return Err(EngineError::InvalidTick(dt));
        }
        self.pending += dt;
        let n = ((self.pending + 1e-9) / PHYSICS_DT).floor() as u64;
        self.pending = (self.pending - n as f64 * PHYSICS_DT).max(0.0);
        let tracked = match input {
            AvatarInput::Tracked(pose) => self.tracked_step(pose, n),
            _ => None,
        };
        for _ in 0..n {
            self.substep(input, tracked);
            if self.outcome.is_some() {
                break;
            }
        }
        Ok(())
    }

    /// Avatar step per substep for a tracked pose, or `None` while there is
    /// nothing to move yet.
    fn tracked_step(&mut self, user: Pose, substeps: u64) -> Option<Step> {
        let tracking = self.tracking.get_or_insert_with(|| Tracking {
            compressor: Compressor::new(self.workspace),
            last_user: None,
            last_replan: None,
            guidance: 0.0,
        });
        let due = tracking
            .last_replan
            .is_none_or(|k| self.steps >= k + SUBSTEPS_PER_DECISION);
        if due {
            let avatar = self.crowd[0].pose();
            let target = predict_target_path(&self.scenario, avatar, None, TRACKING_HORIZON, DEFAULT_CLEARANCE);
            // an infeasible prediction keeps the previous plan
            let _ = tracking.compressor.update_target(&target, user);
            tracking.last_replan = Some(self.steps);
        }
        if substeps == 0 {
            // accumulate until a substep runs
            if tracking.last_user.is_none() {
                tracking.last_user = Some(user);
            }
            return None;
        }
        let Some(last) = tracking.last_user.replace(user) else {
            return None;
        };
        let user_step = Step {
            forward: (user.position - last.position).dot(last.direction()),
            turn: wrap_angle(user.heading - last.heading),
        };
        let mapped = tracking.compressor.map_step(user_step);
        tracking.guidance = tracking.compressor.guidance(user);
        let n = substeps as f64;
        let limit = MAX_AVATAR_SPEED * PHYSICS_DT;
        Some(Step {
            forward: (mapped.forward / n).clamp(-limit, limit),
            turn: mapped.turn / n,
        })
    }

    fn substep(&mut self, input: AvatarInput, tracked: Option<Step>) {
        let policy_avatar = matches!(input, AvatarInput::Policy);
        if self.steps.is_multiple_of(SUBSTEPS_PER_DECISION) {
            self.decide(policy_avatar);
        }
        let h = PHYSICS_DT;
        let before: Vec<Point2> = self.crowd.iter().map(|a| a.position).collect();

        let step = match input {
            AvatarInput::Velocity { forward, turn } => Some(Step {
                forward: forward.clamp(-MAX_AVATAR_SPEED, MAX_AVATAR_SPEED) * h,
                turn: turn.clamp(-MAX_AVATAR_TURN, MAX_AVATAR_TURN) * h,
            }),
            AvatarInput::Tracked(_) => Some(tracked.unwrap_or(Step {
                forward: 0.0,
                turn: 0.0,
            })),
            AvatarInput::Policy => None,
        };
        if let Some(step) = step {
            let avatar = &mut self.crowd[0];
            let pose = apply_step(avatar.pose(), step);
            avatar.position = pose.position;
            avatar.heading = pose.heading;
            keep_off_walls(avatar, &self.scenario);
            avatar.velocity = (avatar.position - before[0]) / h;
        }
        let mut desired = self.desired.clone();
        if !policy_avatar {
            desired[0] = None;
        }
        step_crowd(&mut self.crowd, &desired, &self.scenario, h, &self.params);
        self.steps += 1;
        let t = self.time();

        let avatar_now = self.crowd[0].position;
        if let Some(i) = self.scenario.crossed_exit(before[0], avatar_now) {
            let exit = self.scenario.exits[i].clone();
            let frac = Segment::new(before[0], avatar_now)
                .crossing_parameter(&exit.portal)
                .unwrap_or(1.0);
            let at = before[0].lerp(avatar_now, frac);
            let t_exit = t - h + frac * h;
            self.crowd[0].position = at;
            self.record_sample(t_exit);
            let t_exit = self.samples.last().map_or(t_exit, |s| s.t);
            self.outcome = Some(Outcome::Exited {
                exit_id: exit.id.clone(),
                t_exit,
            });
            return;
        }

        // simulated agents leave through any portal
        let mut keep = vec![true; self.crowd.len()];
        for (i, agent) in self.crowd.iter().enumerate().skip(1) {
            if self.scenario.crossed_exit(before[i], agent.position).is_some() {
                keep[i] = false;
            }
        }
        if keep.iter().any(|k| !k) {
            let mut i = 0;
            self.crowd.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            let mut i = 0;
            self.desired.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }

        let on_grid = self.steps.is_multiple_of(SUBSTEPS_PER_SAMPLE);
        if on_grid {
            self.record_sample(t);
        }
        if t >= self.config.timeout - 1e-9 {
            if !on_grid {
                self.record_sample(t);
            }
            self.outcome = Some(Outcome::TimedOut);
        }
    }

    /// Recomputes the desired direction of every policy-driven body.
    fn decide(&mut self, include_avatar: bool) {
        let world = self.crowd.clone();
        let aided = Surroundings {
            scenario: &self.scenario,
            guiding_lines: &self.guiding_lines,
            signs: &self.signs,
        };
        let bare = Surroundings::bare(&self.scenario);
        for (i, agent) in self.crowd.iter_mut().enumerate() {
            self.desired[i] = if i == 0 {
                include_avatar.then(|| desired_direction(agent, &aided, &world, &mut self.rng))
            } else {
                Some(desired_direction(agent, &bare, &world, &mut self.rng))
            };
        }
    }

    fn record_sample(&mut self, t: f64) {
        let avatar = &self.crowd[0];
        let sign_visible = self
            .signs
            .iter()
            .any(|s| self.scenario.sign_visible_from(s, avatar.position));
        let sample = Sample {
            t,
            avatar: avatar.pose(),
            avatar_speed: avatar.speed(),
            exit_sign_visible: sign_visible,
            agents: self.crowd[1..]
                .iter()
                .map(|a| AgentSample { id: a.id, pose: a.pose() })
                .collect(),
        };
        match self.samples.last_mut() {
            // an end that coincides with the previous sample replaces it
            Some(last) if t <= last.t => *last = Sample { t: last.t, ..sample },
            _ => self.samples.push(sample),
        }
    }

    pub fn run_state(&self) -> RunState {
        match &self.outcome {
            None => RunState::Active,
            Some(Outcome::Exited { exit_id, .. }) => RunState::Exited {
                exit_id: exit_id.clone(),
            },
            Some(Outcome::TimedOut) => RunState::TimedOut,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let a = &self.crowd[0];
        Snapshot {
            t: self.samples.last().filter(|_| self.outcome.is_some()).map_or(self.time(), |s| s.t),
            avatar: AvatarSnapshot {
                x: a.position.x,
                y: a.position.y,
                heading: a.heading,
                speed: a.speed(),
            },
            agents: self.crowd[1..]
                .iter()
                .map(|g| AgentPose {
                    id: g.id,
                    x: g.position.x,
                    y: g.position.y,
                    heading: g.heading,
                })
                .collect(),
            overlays: self.overlays.clone(),
            run_state: self.run_state(),
            guidance_rotation: self.tracking.as_ref().map(|t| t.guidance),
        }
    }

    /// The completed record; `None` while the run is active.
    pub fn record(&self) -> Option<RunRecord> {
        let outcome = self.outcome.clone()?;
        Some(RunRecord {
            config: self.config.clone(),
            distance_walked: path_distance(&self.samples),
            samples: self.samples.clone(),
            outcome,
        })
    }

    pub fn into_record(self) -> Option<RunRecord> {
        let outcome = self.outcome?;
        Some(RunRecord {
            config: self.config,
            distance_walked: path_distance(&self.samples),
            samples: self.samples,
            outcome,
        })
    }
}

/// Runs a headless stand-in for the participant: the avatar follows
/// `policy` at the scripted speed until it exits or the run times out.
pub fn run_scripted(
    config: RunConfig,
    scenario: Arc<Scenario>,
    policy: RouteChoicePolicy,
) -> Result<RunRecord, EngineError> {
    let mut session = start_run(config, scenario)?;
    session.set_avatar_policy(policy)?;
    while session.is_active() {
        session.tick(MAX_TICK, AvatarInput::Policy)?;
    }
    Ok(session.into_record().expect("run ended"))
}
