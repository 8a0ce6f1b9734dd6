//! Offline subcommands: batch runs, metrics and the motion compression demo.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context};
use evacsim_core::engine::{run_batch, write_batch, BatchSpec, Condition, RunSidecar};
use evacsim_core::metrics::{
    aggregate, read_measures_csv, report, write_summary_csv, MeasureKind, ReferenceTable, Report, RunMeasures,
    Selector,
};
use evacsim_core::mocomp::{transform_path_free_start, CompressedPath, SolverOptions, Workspace};
use evacsim_core::{load_scenario, PathPolyline, Scenario, Vec2};
use serde::Serialize;

/// Spacing of the mocomp demo output, m.
pub const DEMO_SPACING: f64 = 0.01;

/// Reads a scenario file.
pub fn read_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_scenario(&text).with_context(|| format!("loading scenario {}", path.display()))
}

/// Runs every condition `runs` times and writes the records and
/// `measures.csv` into `out`.
pub fn batch(
    scenario: Scenario,
    conditions: Vec<Condition>,
    runs: usize,
    seed: u64,
    out: &Path,
) -> anyhow::Result<Vec<RunMeasures>> {
    ensure!(!conditions.is_empty(), "no conditions given");
    ensure!(runs > 0, "runs must be at least 1");
    let scenario = Arc::new(scenario);
    let spec = BatchSpec::new(conditions, runs, seed);
    let records = run_batch(&scenario, &spec)?;
    Ok(write_batch(&records, &scenario, out)?)
}

/// Measures of every run in `dir`: `measures.csv` when present, otherwise
/// the measures stored in the run sidecars.
pub fn collect_measures(dir: &Path) -> anyhow::Result<Vec<RunMeasures>> {
    let table = dir.join("measures.csv");
    if table.exists() {
        return read_measures_csv(&table).with_context(|| format!("reading {}", table.display()));
    }
    let mut sidecars: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    sidecars.sort();
    let mut out = Vec::new();
    for path in sidecars {
        let text = fs::read_to_string(&path)?;
        let Ok(sidecar) = serde_json::from_str::<RunSidecar>(&text) else {
            continue;
        };
        match sidecar.measures {
            Some(m) => out.push(m),
            None => bail!("{} holds no measures", path.display()),
        }
    }
    ensure!(!out.is_empty(), "no runs found in {}", dir.display());
    Ok(out)
}

/// Writes the per-condition summary of `measure` as CSV to `out` and the
/// full report as JSON to `report_path`.
pub fn metrics(
    dir: &Path,
    selector: Selector,
    measure: MeasureKind,
    reference_set: &str,
    out: &Path,
    report_path: &Path,
) -> anyhow::Result<Report> {
    let measures = collect_measures(dir)?;
    let summaries = aggregate(&measures, selector, measure)?;
    let table = ReferenceTable::bundled();
    let full = report(&measures, selector, table.set(reference_set)?)?;
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_summary_csv(&summaries, BufWriter::new(file))?;
    let mut json = serde_json::to_string_pretty(&full)?;
    json.push('\n');
    fs::write(report_path, json).with_context(|| format!("writing {}", report_path.display()))?;
    Ok(full)
}

/// `W x H`, in metres.
pub fn parse_workspace(spec: &str) -> Result<(f64, f64), String> {
    let (w, h) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("workspace {spec:?} is not WIDTHxHEIGHT"))?;
    let dim = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v > 0.0)
            .ok_or_else(|| format!("bad workspace size {s:?}"))
    };
    Ok((dim(w)?, dim(h)?))
}

/// Reads a target path: a JSON array of `[x, y]` pairs, or a CSV with an
/// `x,y` header.
pub fn read_target(path: &Path) -> anyhow::Result<PathPolyline> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let points: Vec<[f64; 2]> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        ensure!(
            header.iter().take(2).eq(["x", "y"]),
            "{}: expected a header starting x,y",
            path.display()
        );
        let mut points = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let num = |i: usize| {
                row.get(i)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .with_context(|| format!("{}, line {line}: bad coordinate", path.display()))
            };
            points.push([num(0)?, num(1)?]);
        }
        points
    };
    let vertices = points.into_iter().map(|[x, y]| Vec2::new(x, y)).collect();
    PathPolyline::new(vertices).map_err(|e| anyhow::anyhow!("target path: {e}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub target_length: f64,
    pub compressed_length: f64,
    pub arcs: usize,
    pub cost: f64,
    pub samples: usize,
}

/// Compresses `target` into a `width` x `height` workspace centred on the
/// origin and writes both paths, sampled every centimetre of arc length,
/// as `s,x,y,heading,target_x,target_y,target_heading`.
pub fn mocomp_demo(
    target: &PathPolyline,
    width: f64,
    height: f64,
    margin: f64,
    out: &Path,
) -> anyhow::Result<(CompressedPath, DemoSummary)> {
    let workspace = Workspace::rectangle(width, height, Vec2::ZERO, margin)?;
    let compressed = transform_path_free_start(target, &workspace, &SolverOptions::default())?;
    let samples = compressed.sample(DEMO_SPACING);
    let mut w = csv::Writer::from_writer(BufWriter::new(
        fs::File::create(out).with_context(|| format!("creating {}", out.display()))?,
    ));
    w.write_record(["s", "x", "y", "heading", "target_x", "target_y", "target_heading"])?;
    for (s, pose) in &samples {
        let q = target.point_at(*s);
        w.write_record(
            [*s, pose.position.x, pose.position.y, pose.heading, q.x, q.y, target.heading_at(*s)]
                .map(|v| v.to_string()),
        )?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?.flush()?;
    let summary = DemoSummary {
        target_length: target.length(),
        compressed_length: compressed.total_length,
        arcs: compressed.arcs.len(),
        cost: compressed.cost(),
        samples: samples.len(),
    };
    Ok((compressed, summary))
}
