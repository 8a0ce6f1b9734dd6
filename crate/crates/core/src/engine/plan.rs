use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, Condition, EngineError, RunConfig, DEFAULT_AGENT_COUNT, DEFAULT_TIMEOUT};
use crate::scenario::Scenario;

/// Counterbalanced schedule of a within-subject study: every participant
/// runs the four conditions, each from a different start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub participants: Vec<String>,
    pub condition_orders: BTreeMap<String, [Condition; 4]>,
    /// Start index of run `k` (1-based) at position `k - 1`.
    pub start_assignments: BTreeMap<String, [usize; 4]>,
}

impl StudyPlan {
    pub fn start_assignment(&self, participant: &str, run_index: u32) -> Option<usize> {
        let starts = self.start_assignments.get(participant)?;
        starts.get((run_index as usize).checked_sub(1)?).copied()
    }

    /// One run configuration per participant and run, in participant order.
    pub fn run_configs(&self, scenario_id: &str, seed: u64) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for (p, participant) in self.participants.iter().enumerate() {
            let order = &self.condition_orders[participant];
            let starts = &self.start_assignments[participant];
            for k in 0..4 {
                out.push(RunConfig {
                    scenario_id: scenario_id.to_string(),
                    condition: order[k],
                    start_position_index: starts[k],
                    participant_id: participant.clone(),
                    run_index: k as u32 + 1,
                    seed: derive_seed(seed, p as u64, k as u64),
                    timeout: DEFAULT_TIMEOUT,
                    agent_count: DEFAULT_AGENT_COUNT,
                });
            }
        }
        out
    }
}

/// Participant `i` gets the study conditions rotated left by `i mod 4`, and
/// four distinct start positions drawn at random.
pub fn build_study_plan(participants: &[String], scenario: &Scenario, seed: u64) -> Result<StudyPlan, EngineError> {
    let available = scenario.start_positions.len();
    if available < 4 {
        return Err(EngineError::TooFewStartPositions { available });
    }
    let mut seen = BTreeSet::new();
    for p in participants {
        if !seen.insert(p) {
            return Err(EngineError::InvalidConfig(format!("participant {p:?} listed twice")));
        }
    }
    let mut condition_orders = BTreeMap::new();
    let mut start_assignments = BTreeMap::new();
    let indices: Vec<usize> = (0..available).collect();
    for (i, p) in participants.iter().enumerate() {
        let mut order = Condition::STUDY;
        order.rotate_left(i % 4);
        condition_orders.insert(p.clone(), order);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, u64::MAX));
        let drawn: Vec<usize> = indices.choose_multiple(&mut rng, 4).copied().collect();
        start_assignments.insert(p.clone(), [drawn[0], drawn[1], drawn[2], drawn[3]]);
    }
    Ok(StudyPlan {
        participants: participants.to_vec(),
        condition_orders,
        start_assignments,
    })
}
