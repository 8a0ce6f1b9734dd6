//! Run orchestration: one avatar (live or scripted) among simulated agents,
//! recorded at a fixed rate, plus study planning and headless batches.

mod batch;
mod plan;
mod record;
mod session;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, RouteChoicePolicy};
use crate::geometry::Pose;
use crate::scenario::ScenarioError;

pub use batch::{derive_seed, run_batch, write_batch, BatchSpec};
pub use plan::{build_study_plan, StudyPlan};
pub use record::{read_run, write_run, RunSidecar, StoredRun};
pub use session::{
    run_scripted, start_run, AgentPose, AvatarInput, AvatarSnapshot, Overlays, RunState, Session,
    Snapshot,
};

/// Physics substep, s.
pub const PHYSICS_DT: f64 = 0.01;
/// Recording rate, Hz.
pub const SAMPLE_RATE: f64 = 10.0;
/// Substeps between two recorded samples.
pub const SUBSTEPS_PER_SAMPLE: u64 = 10;
/// Substeps between two route-choice decisions.
pub const SUBSTEPS_PER_DECISION: u64 = 10;
/// Longest accepted tick, s.
pub const MAX_TICK: f64 = 0.1;
pub const DEFAULT_TIMEOUT: f64 = 600.0;
pub const DEFAULT_AGENT_COUNT: usize = 6;
pub const MAX_AGENT_COUNT: usize = 64;
/// Speed limit for velocity and tracked avatar input, m/s.
pub const MAX_AVATAR_SPEED: f64 = 2.0;
/// Turn-rate limit for velocity input, rad/s.
pub const MAX_AVATAR_TURN: f64 = 3.0;
/// Desired speed of a scripted avatar, m/s.
pub const SCRIPTED_SPEED: f64 = 1.1;
pub const AVATAR_RADIUS: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("start position {index} does not exist (scenario has {available})")]
    InvalidStart { index: usize, available: usize },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("tick length {0} s outside (0, {MAX_TICK}]")]
    InvalidTick(f64),
    #[error("the run has already ended")]
    RunEnded,
    #[error("scenario has {available} start positions, a study plan needs at least 4")]
    TooFewStartPositions { available: usize },
    #[error("record is for scenario {record:?}, not {scenario:?}")]
    ScenarioMismatch { record: String, scenario: String },
    #[error("could not place simulated agent {0}")]
    Spawn(u32),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record {path}, line {line}: {message}")]
    CorruptRecord {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

/// Wayfinding aid active during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    GuidingLines,
    SimulatedAgents,
    ExitSigns,
    FloorPlan,
    None,
}

impl Condition {
    /// The four study conditions, in counterbalancing order.
    pub const STUDY: [Condition; 4] = [
        Condition::GuidingLines,
        Condition::SimulatedAgents,
        Condition::ExitSigns,
        Condition::FloorPlan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::GuidingLines => "guiding_lines",
            Condition::SimulatedAgents => "simulated_agents",
            Condition::ExitSigns => "exit_signs",
            Condition::FloorPlan => "floor_plan",
            Condition::None => "none",
        }
    }

    /// Policy a scripted stand-in uses under this condition. Without any
    /// aid it explores like a sign follower that never sees a sign.
    pub fn scripted_policy(self) -> RouteChoicePolicy {
        match self {
            Condition::GuidingLines => RouteChoicePolicy::guiding_line(),
            Condition::SimulatedAgents => RouteChoicePolicy::follow_others(),
            Condition::ExitSigns | Condition::None => RouteChoicePolicy::exit_signs(),
            Condition::FloorPlan => RouteChoicePolicy::floor_plan_memory(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = [
            Condition::GuidingLines,
            Condition::SimulatedAgents,
            Condition::ExitSigns,
            Condition::FloorPlan,
            Condition::None,
        ];
        all.into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario_id: String,
    pub condition: Condition,
    pub start_position_index: usize,
    pub participant_id: String,
    /// 1-based position of the run in the participant's sequence.
    pub run_index: u32,
    pub seed: u64,
    /// s
    pub timeout: f64,
    /// Simulated agents spawned under [`Condition::SimulatedAgents`].
    pub agent_count: usize,
}

impl RunConfig {
    pub fn new(scenario_id: &str, condition: Condition, start_position_index: usize, seed: u64) -> Self {
        RunConfig {
            scenario_id: scenario_id.to_string(),
            condition,
            start_position_index,
            participant_id: "p00".to_string(),
            run_index: 1,
            seed,
            timeout: DEFAULT_TIMEOUT,
            agent_count: DEFAULT_AGENT_COUNT,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if self.run_index < 1 {
            return bad("run_index must be at least 1");
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return bad("timeout must be positive");
        }
        if self.agent_count > MAX_AGENT_COUNT {
            return bad("agent_count too large");
        }
        if self.participant_id.is_empty()
            || !self
                .participant_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.')
        {
            return bad("participant_id must be non-empty ASCII letters, digits, '-' or '.'");
        }
        Ok(())
    }

    /// `<participant>_<run_index>_<condition>`
    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.participant_id, self.run_index, self.condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Exited { exit_id: String, t_exit: f64 },
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSample {
    pub id: u32,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub avatar: Pose,
    pub avatar_speed: f64,
    pub exit_sign_visible: bool,
    pub agents: Vec<AgentSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub samples: Vec<Sample>,
    pub outcome: Outcome,
    pub distance_walked: f64,
}

impl RunRecord {
    /// Time of the last sample.
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }
}

/// Sum of distances between consecutive avatar samples.
pub fn path_distance(samples: &[Sample]) -> f64 {
    samples
        .windows(2)
        .map(|w| w[0].avatar.position.distance(w[1].avatar.position))
        .sum()
}
