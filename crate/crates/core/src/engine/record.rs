//! Flat-file run records: a trajectory CSV, an optional agents CSV and a
//! JSON sidecar, all sharing the stem `<participant>_<run_index>_<condition>`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    path_distance, AgentSample, EngineError, Outcome, RunConfig, RunRecord, Sample, SAMPLE_RATE,
};
use crate::geometry::{Pose, Vec2};
use crate::metrics::RunMeasures;

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "x", "y", "heading", "speed", "sign_visible"];
pub const AGENTS_HEADER: [&str; 5] = ["t", "id", "x", "y", "heading"];

/// Everything about a run that is not in the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub config: RunConfig,
    pub outcome: Outcome,
    pub distance_walked: f64,
    /// Hz
    pub sample_rate: f64,
    pub sample_count: usize,
    /// File name of the agents CSV, when agents were present.
    #[serde(default)]
    pub agents_file: Option<String>,
    #[serde(default)]
    pub measures: Option<RunMeasures>,
}

/// A run read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRun {
    pub record: RunRecord,
    pub measures: Option<RunMeasures>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_io(path: &Path, e: csv::Error) -> EngineError {
    EngineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Writes the record into `dir` and returns the trajectory CSV path.
pub fn write_run(record: &RunRecord, measures: Option<&RunMeasures>, dir: &Path) -> Result<PathBuf, EngineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = record.config.file_stem();
    let csv_path = dir.join(format!("{stem}.csv"));
    {
        let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(TRAJECTORY_HEADER).map_err(|e| csv_io(&csv_path, e))?;
        for s in &record.samples {
            w.write_record([
                s.t.to_string(),
                s.avatar.position.x.to_string(),
                s.avatar.position.y.to_string(),
                s.avatar.heading.to_string(),
                s.avatar_speed.to_string(),
                u8::from(s.exit_sign_visible).to_string(),
            ])
            .map_err(|e| csv_io(&csv_path, e))?;
        }
        w.flush().map_err(io_err(&csv_path))?;
    }

    let has_agents = record.samples.iter().any(|s| !s.agents.is_empty());
    let agents_file = has_agents.then(|| format!("{stem}.agents.csv"));
    if let Some(name) = &agents_file {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(AGENTS_HEADER).map_err(|e| csv_io(&path, e))?;
        for s in &record.samples {
            for a in &s.agents {
                w.write_record([
                    s.t.to_string(),
                    a.id.to_string(),
                    a.pose.position.x.to_string(),
                    a.pose.position.y.to_string(),
                    a.pose.heading.to_string(),
                ])
                .map_err(|e| csv_io(&path, e))?;
            }
        }
        w.flush().map_err(io_err(&path))?;
    }

    let sidecar = RunSidecar {
        config: record.config.clone(),
        outcome: record.outcome.clone(),
        distance_walked: record.distance_walked,
        sample_rate: SAMPLE_RATE,
        sample_count: record.samples.len(),
        agents_file,
        measures: measures.cloned(),
    };
    let json_path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(&json_path, text).map_err(io_err(&json_path))?;
    Ok(csv_path)
}

fn corrupt(path: &Path, line: u64, message: impl Into<String>) -> EngineError {
    EngineError::CorruptRecord {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Sidecar path for a trajectory CSV path (or the sidecar itself).
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Reads a run written by [`write_run`], given its trajectory CSV or its
/// sidecar. Truncated or malformed files are reported with the offending
/// line.
pub fn read_run(path: &Path) -> Result<StoredRun, EngineError> {
    let csv_path = path.with_extension("csv");
    let json_path = sidecar_path(path);
    let text = fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
    let sidecar: RunSidecar = serde_json::from_str(&text)
        .map_err(|e| corrupt(&json_path, e.line() as u64, e.to_string()))?;

    let raw = fs::read(&csv_path).map_err(io_err(&csv_path))?;
    let lines = raw.iter().filter(|&&b| b == b'\n').count() as u64;
    if !raw.ends_with(b"\n") {
        return Err(corrupt(&csv_path, lines + 1, "line is incomplete"));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(raw.as_slice());
    let header = reader.headers().map_err(|e| corrupt(&csv_path, 1, e.to_string()))?;
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(corrupt(&csv_path, 1, "unexpected header"));
    }
    let mut samples: Vec<Sample> = Vec::with_capacity(sidecar.sample_count);
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            corrupt(&csv_path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != TRAJECTORY_HEADER.len() {
            return Err(corrupt(&csv_path, line, format!("expected 6 fields, found {}", row.len())));
        }
        let num = |i: usize| -> Result<f64, EngineError> {
            row[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| corrupt(&csv_path, line, format!("bad {} value {:?}", TRAJECTORY_HEADER[i], &row[i])))
        };
        let visible = match &row[5] {
            "0" => false,
            "1" => true,
            other => return Err(corrupt(&csv_path, line, format!("bad sign_visible value {other:?}"))),
        };
        let t = num(0)?;
        if samples.last().is_some_and(|s| t <= s.t) {
            return Err(corrupt(&csv_path, line, "time does not increase"));
        }
        samples.push(Sample {
            t,
            avatar: Pose {
                position: Vec2::new(num(1)?, num(2)?),
                heading: num(3)?,
            },
            avatar_speed: num(4)?,
            exit_sign_visible: visible,
            agents: Vec::new(),
        });
    }
    if samples.len() != sidecar.sample_count {
        return Err(corrupt(
            &csv_path,
            samples.len() as u64 + 2,
            format!("expected {} samples, found {}", sidecar.sample_count, samples.len()),
        ));
    }

    if let Some(name) = &sidecar.agents_file {
        let path = csv_path.with_file_name(name);
        read_agents(&path, &mut samples)?;
    }
    let distance = path_distance(&samples);
    if (distance - sidecar.distance_walked).abs() > 1e-6 {
        return Err(corrupt(
            &json_path,
            0,
            format!("distance_walked {} disagrees with the trajectory ({distance})", sidecar.distance_walked),
        ));
    }
    Ok(StoredRun {
        record: RunRecord {
            config: sidecar.config,
            samples,
            outcome: sidecar.outcome,
            distance_walked: sidecar.distance_walked,
        },
        measures: sidecar.measures,
    })
}

fn read_agents(path: &Path, samples: &mut [Sample]) -> Result<(), EngineError> {
    let raw = fs::read(path).map_err(io_err(path))?;
    if !raw.ends_with(b"\n") {
        let lines = raw.iter().filter(|&&b| b == b'\n').count() as u64;
        return Err(corrupt(path, lines + 1, "line is incomplete"));
    }
    let mut reader = csv::Reader::from_reader(raw.as_slice());
    let mut k = 0;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            corrupt(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let parse = |i: usize| row.get(i).and_then(|v| v.parse::<f64>().ok());
        let (Some(t), Some(id), Some(x), Some(y), Some(h)) = (
            parse(0),
            row.get(1).and_then(|v| v.parse::<u32>().ok()),
            parse(2),
            parse(3),
            parse(4),
        ) else {
            return Err(corrupt(path, line, "malformed agent row"));
        };
        while k < samples.len() && samples[k].t < t {
            k += 1;
        }
        if k == samples.len() || samples[k].t != t {
            return Err(corrupt(path, line, format!("no trajectory sample at t = {t}")));
        }
        samples[k].agents.push(AgentSample {
            id,
            pose: Pose {
                position: Vec2::new(x, y),
                heading: h,
            },
        });
    }
    Ok(())
}
