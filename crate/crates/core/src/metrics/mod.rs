//! Per-run measures and their aggregation by condition.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Condition, Outcome, RunRecord};
use crate::scenario::Scenario;

/// Reference values from field studies, keyed by set then measure.
pub const REFERENCE_FIXTURE: &str = include_str!("../../fixtures/reference.json");

pub const MEASURES_HEADER: [&str; 8] = [
    "participant_id",
    "condition",
    "run_index",
    "exit_chosen",
    "correct_exit",
    "travel_time",
    "distance",
    "mean_speed",
];

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("record does not belong to scenario {scenario:?}: {reason}")]
    Mismatch { scenario: String, reason: String },
    #[error("no runs left after filter {0}")]
    EmptyAfterFilter(Selector),
    #[error("no input runs")]
    Empty,
    #[error("reference has no {measure} entry")]
    MissingReference { measure: MeasureKind },
    #[error("unknown reference set {0:?}")]
    UnknownReferenceSet(String),
    #[error("reference table: {0}")]
    Reference(String),
    #[error("measures file, line {line}: {message}")]
    Parse { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeasures {
    pub participant_id: String,
    pub condition: Condition,
    pub run_index: u32,
    pub exit_chosen: Option<String>,
    pub correct_exit: bool,
    /// s; none when the run timed out
    pub travel_time: Option<f64>,
    /// m
    pub distance: f64,
    /// m/s
    pub mean_speed: f64,
}

/// Exit choice, travel time, distance and mean speed of one run. The
/// correct exit is the geodesically nearest one from the run's start.
pub fn measure_run(record: &RunRecord, scenario: &Scenario) -> Result<RunMeasures, MetricsError> {
    let config = &record.config;
    let mismatch = |reason: String| MetricsError::Mismatch {
        scenario: scenario.id.clone(),
        reason,
    };
    if config.scenario_id != scenario.id {
        return Err(mismatch(format!("record is for {:?}", config.scenario_id)));
    }
    let start = scenario
        .start_positions
        .get(config.start_position_index)
        .ok_or_else(|| mismatch(format!("no start position {}", config.start_position_index)))?;
    let (exit_chosen, travel_time) = match &record.outcome {
        Outcome::Exited { exit_id, t_exit } => {
            if scenario.exit(exit_id).is_none() {
                return Err(mismatch(format!("no exit {exit_id:?}")));
            }
            (Some(exit_id.clone()), Some(*t_exit))
        }
        Outcome::TimedOut => (None, None),
    };
    let correct_exit = match &exit_chosen {
        Some(id) => {
            let (nearest, _) = scenario.nearest_exit(*start).map_err(|e| mismatch(e.to_string()))?;
            nearest.id == *id
        }
        None => false,
    };
    let distance = record.distance_walked;
    let duration = travel_time.unwrap_or_else(|| record.duration());
    let mean_speed = if duration > 0.0 { distance / duration } else { 0.0 };
    Ok(RunMeasures {
        participant_id: config.participant_id.clone(),
        condition: config.condition,
        run_index: config.run_index,
        exit_chosen,
        correct_exit,
        travel_time,
        distance,
        mean_speed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Time,
    Distance,
    Speed,
    CorrectRate,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [
        MeasureKind::Time,
        MeasureKind::Distance,
        MeasureKind::Speed,
        MeasureKind::CorrectRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::Time => "time",
            MeasureKind::Distance => "distance",
            MeasureKind::Speed => "speed",
            MeasureKind::CorrectRate => "correct_rate",
        }
    }

    /// The measure's value for one run, or `None` when the run does not
    /// count toward it (time and speed of a timed-out run).
    fn value(self, m: &RunMeasures) -> Option<f64> {
        match self {
            MeasureKind::Time => m.travel_time,
            MeasureKind::Distance => Some(m.distance),
            MeasureKind::Speed => m.travel_time.map(|_| m.mean_speed),
            MeasureKind::CorrectRate => Some(if m.correct_exit { 1.0 } else { 0.0 }),
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown measure {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    FirstRunsOnly,
    AllRuns,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::FirstRunsOnly => "first_runs_only",
            Selector::AllRuns => "all_runs",
        })
    }
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" | "first_runs_only" => Ok(Selector::FirstRunsOnly),
            "all" | "all_runs" => Ok(Selector::AllRuns),
            _ => Err(format!("unknown selector {s:?} (expected first or all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub measure_kind: MeasureKind,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    /// Runs of the group left out of the measure (timed out, for time and speed).
    pub excluded: usize,
}

/// Mean and sample standard deviation. Summation is in sorted order so the
/// result does not depend on the input order.
fn mean_std(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// Summaries per condition, in condition order. Groups in which no run
/// counts toward the measure are left out.
pub fn aggregate(
    measures: &[RunMeasures],
    selector: Selector,
    kind: MeasureKind,
) -> Result<Vec<ConditionSummary>, MetricsError> {
    if measures.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut groups: BTreeMap<Condition, (Vec<f64>, usize)> = BTreeMap::new();
    for m in measures {
        if selector == Selector::FirstRunsOnly && m.run_index != 1 {
            continue;
        }
        let group = groups.entry(m.condition).or_default();
        match kind.value(m) {
            Some(v) => group.0.push(v),
            None => group.1 += 1,
        }
    }
    if groups.is_empty() {
        return Err(MetricsError::EmptyAfterFilter(selector));
    }
    let out: Vec<ConditionSummary> = groups
        .into_iter()
        .filter(|(_, (values, _))| !values.is_empty())
        .map(|(condition, (mut values, excluded))| {
            let (mean, std) = mean_std(&mut values);
            ConditionSummary {
                condition,
                measure_kind: kind,
                n: values.len(),
                mean,
                std,
                excluded,
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndexSpeed {
    pub run_index: u32,
    pub n: usize,
    pub mean_speed: f64,
    pub std: f64,
}

/// Mean speed over exited runs, grouped by run index in ascending order.
pub fn speed_by_run_index(measures: &[RunMeasures]) -> Vec<RunIndexSpeed> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for m in measures.iter().filter(|m| m.travel_time.is_some()) {
        groups.entry(m.run_index).or_default().push(m.mean_speed);
    }
    groups
        .into_iter()
        .map(|(run_index, mut v)| {
            let (mean_speed, std) = mean_std(&mut v);
            RunIndexSpeed {
                run_index,
                n: v.len(),
                mean_speed,
                std,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Named sets of reference envelopes, each keyed by measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceTable(pub BTreeMap<String, BTreeMap<MeasureKind, Envelope>>);

impl ReferenceTable {
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let table: ReferenceTable = serde_json::from_str(text).map_err(|e| MetricsError::Reference(e.to_string()))?;
        for (set, entries) in &table.0 {
            for (kind, e) in entries {
                if !(e.min <= e.mean && e.mean <= e.max) {
                    return Err(MetricsError::Reference(format!("{set}.{kind}: mean outside [min, max]")));
                }
            }
        }
        Ok(table)
    }

    pub fn bundled() -> Self {
        ReferenceTable::parse(REFERENCE_FIXTURE).expect("bundled reference table is valid")
    }

    pub fn set(&self, name: &str) -> Result<&BTreeMap<MeasureKind, Envelope>, MetricsError> {
        self.0
            .get(name)
            .ok_or_else(|| MetricsError::UnknownReferenceSet(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub condition: Condition,
    pub measure_kind: MeasureKind,
    pub value: f64,
    pub reference: Envelope,
    pub inside: bool,
}

/// Flags each summary mean as inside or outside the reference envelope
/// of its measure (bounds included).
pub fn compare_to_reference(
    summaries: &[ConditionSummary],
    reference: &BTreeMap<MeasureKind, Envelope>,
) -> Result<Vec<Comparison>, MetricsError> {
    summaries
        .iter()
        .map(|s| {
            let env = reference
                .get(&s.measure_kind)
                .ok_or(MetricsError::MissingReference { measure: s.measure_kind })?;
            Ok(Comparison {
                condition: s.condition,
                measure_kind: s.measure_kind,
                value: s.mean,
                reference: *env,
                inside: env.min <= s.mean && s.mean <= env.max,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_measures_csv(measures: &[RunMeasures], path: &Path) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    w.write_record(MEASURES_HEADER)?;
    for m in measures {
        w.write_record([
            m.participant_id.clone(),
            m.condition.to_string(),
            m.run_index.to_string(),
            m.exit_chosen.clone().unwrap_or_default(),
            m.correct_exit.to_string(),
            opt(m.travel_time),
            m.distance.to_string(),
            m.mean_speed.to_string(),
        ])?;
    }
    w.flush()
}

pub fn read_measures_csv(path: &Path) -> Result<Vec<RunMeasures>, MetricsError> {
    let parse_err = |line: u64, message: String| MetricsError::Parse { line, message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().ne(MEASURES_HEADER) {
        return Err(parse_err(1, "unexpected header".into()));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| parse_err(line, format!("bad {what}"));
        let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad(MEASURES_HEADER[i]));
        out.push(RunMeasures {
            participant_id: row[0].to_string(),
            condition: row[1].parse().map_err(|_| bad("condition"))?,
            run_index: row[2].parse().map_err(|_| bad("run_index"))?,
            exit_chosen: (!row[3].is_empty()).then(|| row[3].to_string()),
            correct_exit: row[4].parse().map_err(|_| bad("correct_exit"))?,
            travel_time: if row[5].is_empty() { None } else { Some(num(5)?) },
            distance: num(6)?,
            mean_speed: num(7)?,
        });
    }
    Ok(out)
}

/// `condition,n,mean,std,excluded`
pub fn write_summary_csv<W: Write>(summaries: &[ConditionSummary], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["condition", "n", "mean", "std", "excluded"])?;
    for s in summaries {
        w.write_record([
            s.condition.to_string(),
            s.n.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.excluded.to_string(),
        ])?;
    }
    w.flush()
}

/// Everything the metrics tool reports for one selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub selector: Selector,
    pub runs: usize,
    pub summaries: BTreeMap<MeasureKind, Vec<ConditionSummary>>,
    pub speed_by_run_index: Vec<RunIndexSpeed>,
    pub comparison: Vec<Comparison>,
}

/// Builds the full report, comparing distance and speed with the given
/// reference set.
pub fn report(
    measures: &[RunMeasures],
    selector: Selector,
    reference: &BTreeMap<MeasureKind, Envelope>,
) -> Result<Report, MetricsError> {
    let mut summaries = BTreeMap::new();
    for kind in MeasureKind::ALL {
        summaries.insert(kind, aggregate(measures, selector, kind)?);
    }
    let mut comparison = Vec::new();
    for kind in [MeasureKind::Distance, MeasureKind::Speed] {
        if reference.contains_key(&kind) {
            comparison.extend(compare_to_reference(&summaries[&kind], reference)?);
        }
    }
    let selected: Vec<RunMeasures> = measures
        .iter()
        .filter(|m| selector == Selector::AllRuns || m.run_index == 1)
        .cloned()
        .collect();
    Ok(Report {
        selector,
        runs: selected.len(),
        summaries,
        speed_by_run_index: speed_by_run_index(measures),
        comparison,
    })
}
