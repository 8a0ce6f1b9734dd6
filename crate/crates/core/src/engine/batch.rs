use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{run_scripted, write_run, Condition, EngineError, RunConfig, RunRecord, DEFAULT_AGENT_COUNT, DEFAULT_TIMEOUT};
use crate::metrics::{measure_run, write_measures_csv, RunMeasures};
use crate::scenario::Scenario;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for item `(a, b)` of a run family seeded with `seed`.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub conditions: Vec<Condition>,
    /// Replicates per condition.
    pub runs: usize,
    pub seed: u64,
    pub timeout: f64,
    pub agent_count: usize,
}

impl BatchSpec {
    pub fn new(conditions: Vec<Condition>, runs: usize, seed: u64) -> Self {
        BatchSpec {
            conditions,
            runs,
            seed,
            timeout: DEFAULT_TIMEOUT,
            agent_count: DEFAULT_AGENT_COUNT,
        }
    }

    /// Configurations in output order: by condition, then replicate.
    /// Replicate `r` uses the same start and seed under every condition.
    pub fn configs(&self, scenario: &Scenario) -> Vec<RunConfig> {
        let starts = scenario.start_positions.len().max(1);
        let mut out = Vec::with_capacity(self.conditions.len() * self.runs);
        for &condition in &self.conditions {
            for r in 0..self.runs {
                let seed = derive_seed(self.seed, r as u64, 0);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, r as u64, 1));
                out.push(RunConfig {
                    scenario_id: scenario.id.clone(),
                    condition,
                    start_position_index: rng.gen_range(0..starts),
                    participant_id: format!("batch{r:03}"),
                    run_index: 1,
                    seed,
                    timeout: self.timeout,
                    agent_count: self.agent_count,
                });
            }
        }
        out
    }
}

/// Runs every (condition, replicate) pair with the condition's scripted
/// policy, in parallel; the result is independent of scheduling.
pub fn run_batch(scenario: &Arc<Scenario>, spec: &BatchSpec) -> Result<Vec<RunRecord>, EngineError> {
    if spec.conditions.is_empty() {
        return Err(EngineError::InvalidConfig("no conditions given".into()));
    }
    spec.configs(scenario)
        .into_par_iter()
        .map(|config| {
            let policy = config.condition.scripted_policy();
            run_scripted(config, Arc::clone(scenario), policy)
        })
        .collect()
}

/// Writes every record and `measures.csv` into `dir`.
pub fn write_batch(records: &[RunRecord], scenario: &Scenario, dir: &Path) -> Result<Vec<RunMeasures>, EngineError> {
    let mut all = Vec::with_capacity(records.len());
    for record in records {
        let m = measure_run(record, scenario).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        write_run(record, Some(&m), dir)?;
        all.push(m);
    }
    let path = dir.join("measures.csv");
    write_measures_csv(&all, &path).map_err(|source| EngineError::Io { path, source })?;
    Ok(all)
}
