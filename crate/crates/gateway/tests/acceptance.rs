//! One PASS or FAIL line per acceptance criterion; exits non-zero if any
//! criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{corridor, start_live, Client};
use evacsim_core::agents::{social_force_step, AgentState, RouteChoicePolicy, SocialForceParams};
use evacsim_core::engine::{read_run, run_batch, BatchSpec, Condition, Outcome, RunRecord};
use evacsim_core::geometry::Vec2;
use evacsim_core::metrics::{
    aggregate, compare_to_reference, measure_run, ConditionSummary, MeasureKind, ReferenceTable, RunMeasures,
    Selector,
};
use evacsim_core::mocomp::{transform_path, transform_path_free_start, SolverOptions, Workspace};
use evacsim_core::scenario::{DEFAULT_CLEARANCE, HOTEL_PRIMARY_START};
use evacsim_core::{load_scenario, PathPolyline, Pose, Scenario};
use evacsim_gateway::protocol::{kind, RunComplete};
use evacsim_gateway::ServeOptions;
use evacsim_testkit::buildings::random_building;
use evacsim_testkit::grid::grid_distance;
use evacsim_testkit::paths::{max_overshoot, max_turn_error, random_target_path, track_exactly};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Verdict = Result<String, String>;

fn within(elapsed: Duration, limit: f64, detail: String) -> Verdict {
    let secs = elapsed.as_secs_f64();
    if secs < limit {
        Ok(format!("{detail}; {secs:.2} s"))
    } else {
        Err(format!("{detail}; took {secs:.2} s, limit {limit} s"))
    }
}

fn mocomp_corpus() -> Verdict {
    let t0 = Instant::now();
    let ws = Workspace::rectangle(4.0, 4.0, Vec2::ZERO, 0.1).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let (mut worst_len, mut worst_turn, mut worst_out) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let target = random_target_path(&mut rng, 20, 100.0);
        let c = transform_path_free_start(&target, &ws, &SolverOptions::default())
            .map_err(|e| format!("path {i}: {e}"))?;
        worst_len = worst_len.max((c.total_length - target.length()).abs() / target.length());
        for (arc, seg) in c.arcs.iter().zip(target.segments()) {
            worst_len = worst_len.max((arc.length - seg.length()).abs() / seg.length());
        }
        worst_turn = worst_turn.max(max_turn_error(&c, &target));
        worst_out = worst_out.max(max_overshoot(&c, &ws, 0.01));
    }
    let detail = format!("length {worst_len:.1e} rel, turns {worst_turn:.1e} rad, overshoot {worst_out:.1e} m");
    if worst_len > 1e-6 || worst_turn > 1e-6 || worst_out > 1e-6 {
        return Err(detail);
    }
    within(t0.elapsed(), 30.0, detail)
}

fn analytic_circle() -> Verdict {
    let t0 = Instant::now();
    let ws = Workspace::disc(2.2, Vec2::ZERO, 0.1).map_err(|e| e.to_string())?;
    let len = 4.0 * std::f64::consts::PI;
    let target = PathPolyline::new(vec![Vec2::ZERO, Vec2::new(len, 0.0)]).map_err(|e| e.to_string())?;
    let c = transform_path(&target, &ws, Pose::new(Vec2::new(0.0, -2.0), 0.0)).map_err(|e| e.to_string())?;
    let err = (c.total_length - len).abs();
    let out = max_overshoot(&c, &ws, 0.01);
    let detail = format!("{} arc(s), length error {err:.1e}, overshoot {out:.1e} m", c.arcs.len());
    if c.arcs.len() != 1 || err > 1e-6 || out > 1e-6 {
        return Err(detail);
    }
    within(t0.elapsed(), 1.0, detail)
}

fn round_trip() -> Verdict {
    let ws = Workspace::rectangle(4.0, 4.0, Vec2::ZERO, 0.1).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let target = random_target_path(&mut rng, 20, 100.0);
        let c = transform_path_free_start(&target, &ws, &SolverOptions::default()).map_err(|e| e.to_string())?;
        let start = Pose::new(target.first(), target.heading_at(0.0));
        let reached = track_exactly(&c, start, 10_000);
        for (got, want) in reached.iter().zip(target.vertices()) {
            worst = worst.max(got.distance(*want));
        }
    }
    let detail = format!("worst vertex error {worst:.1e} m over 10 paths");
    if worst <= 1e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pathfinding() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for b in 0..20 {
        let s = random_building(&mut rng, &format!("b{b}"));
        let start = s.start_positions[0];
        for exit in &s.exits {
            let Ok(path) = s.shortest_path(start, exit, DEFAULT_CLEARANCE) else {
                continue;
            };
            let grid = grid_distance(&s, start, exit.portal.midpoint(), DEFAULT_CLEARANCE, 0.05)
                .ok_or_else(|| format!("building {b}: grid cannot reach exit {}", exit.id))?;
            worst = worst.max((path.length() - grid).abs() / grid);
            checked += 1;
        }
    }
    let hotel = Scenario::hotel();
    let (_, nearest) = hotel
        .nearest_exit(hotel.start_positions[HOTEL_PRIMARY_START])
        .map_err(|e| e.to_string())?;
    let detail = format!("{checked} paths, worst {:.2}% off the grid; hotel nearest exit {nearest:.2} m", worst * 100.0);
    if checked < 20 || worst > 0.02 || (nearest - 13.5).abs() > 0.5 {
        return Err(detail);
    }
    within(t0.elapsed(), 60.0, detail)
}

fn measures_of(scenario: &Arc<Scenario>, condition: Condition, runs: usize) -> Result<Vec<RunMeasures>, String> {
    let records: Vec<RunRecord> =
        run_batch(scenario, &BatchSpec::new(vec![condition], runs, 7)).map_err(|e| e.to_string())?;
    records
        .iter()
        .map(|r| measure_run(r, scenario).map_err(|e| e.to_string()))
        .collect()
}

fn policy_behaviour() -> Verdict {
    let t0 = Instant::now();
    let hotel = Arc::new(Scenario::hotel());
    let rate = |m: &[RunMeasures]| m.iter().filter(|m| m.correct_exit).count() as f64 / m.len() as f64;
    let mean_distance = |m: &[RunMeasures]| m.iter().map(|m| m.distance).sum::<f64>() / m.len() as f64;
    let guided = measures_of(&hotel, Condition::GuidingLines, 50)?;
    let signs = measures_of(&hotel, Condition::ExitSigns, 200)?;
    let follow = measures_of(&hotel, Condition::SimulatedAgents, 200)?;
    let detail = format!(
        "guiding line correct {:.2}, exit signs correct {:.3}, distance follow {:.1} m vs signs {:.1} m",
        rate(&guided),
        rate(&signs),
        mean_distance(&follow),
        mean_distance(&signs)
    );
    let signs_rate = rate(&signs);
    if rate(&guided) != 1.0 || !(signs_rate > 0.2 && signs_rate < 0.8) || mean_distance(&follow) > mean_distance(&signs)
    {
        return Err(detail);
    }
    within(t0.elapsed(), 300.0, detail)
}

fn files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            let bytes = fs::read(&p).map_err(|e| e.to_string())?;
            out.push((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), bytes));
        }
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let hotel = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/hotel.json");
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_evacsim"))
            .args(["batch", "--conditions", "guiding_lines,simulated_agents,exit_signs,floor_plan"])
            .args(["--runs", "5", "--seed", "99", "--scenario"])
            .arg(&hotel)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(files(&out)?);
    }
    let detail = format!("{} CSV files compared", outputs[0].len());
    // 20 trajectories, 5 agent tables and the measures table
    if outputs[0].len() == 26 && outputs[0] == outputs[1] {
        Ok(detail)
    } else {
        Err(format!("{detail}; outputs differ"))
    }
}

fn run_measures(participant: &str, condition: Condition, travel_time: f64) -> RunMeasures {
    RunMeasures {
        participant_id: participant.to_string(),
        condition,
        run_index: 1,
        exit_chosen: Some("E".into()),
        correct_exit: true,
        travel_time: Some(travel_time),
        distance: 20.0,
        mean_speed: 20.0 / travel_time,
    }
}

fn metrics_fixtures() -> Verdict {
    let runs = vec![
        run_measures("p1", Condition::GuidingLines, 90.0),
        run_measures("p2", Condition::GuidingLines, 93.2),
        run_measures("p3", Condition::SimulatedAgents, 85.0),
        run_measures("p4", Condition::SimulatedAgents, 89.4),
    ];
    let summaries = aggregate(&runs, Selector::FirstRunsOnly, MeasureKind::Time).map_err(|e| e.to_string())?;
    let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    let table = ReferenceTable::bundled();
    let real = table.set("real").map_err(|e| e.to_string())?;
    let distance = |mean: f64| ConditionSummary {
        condition: Condition::ExitSigns,
        measure_kind: MeasureKind::Distance,
        n: 1,
        mean,
        std: 0.0,
        excluded: 0,
    };
    let flags = compare_to_reference(&[distance(26.7), distance(100.0)], real).map_err(|e| e.to_string())?;
    let env = flags[0].reference;
    let detail = format!(
        "means {:?}; 26.7 m inside={}, 100 m inside={} of [{}, {}]",
        means, flags[0].inside, flags[1].inside, env.min, env.max
    );
    if means == [91.6, 87.2] && flags[0].inside && !flags[1].inside && (env.min, env.max) == (13.5, 83.2) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn relaxation() -> Verdict {
    let field = load_scenario(
        r#"{"id":"field","bounds":{"min":[-50,-50],"max":[50,50]},
        "walls":[[40,-1,40,-2],[40,1,40,2]],
        "exits":[{"id":"e","portal":[40,-1,40,1],"label":"gate"}],"starts":[[0,0]]}"#,
    )
    .map_err(|e| e.to_string())?;
    let params = SocialForceParams::default();
    let speed = 1.3;
    let mut a = AgentState::new(0, Vec2::ZERO, 0.0, 0.25, speed, RouteChoicePolicy::scripted_goal(None))
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for k in 1..=500 {
        social_force_step(&mut a, Vec2::new(1.0, 0.0), &[], &field, 0.01, &params);
        let exact = speed * (1.0 - (-(k as f64 * 0.01) / params.relaxation_time).exp());
        worst = worst.max((a.speed() - exact).abs() / exact);
    }
    let detail = format!("worst relative error {:.3}% over 5 s", worst * 100.0);
    if worst <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn live_offline() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let tick_rate = 100.0;
    let addr = start_live(
        corridor(),
        ServeOptions {
            tick_rate,
            record_dir: Some(dir.path().to_path_buf()),
        },
    );
    let mut c = Client::connect(addr);
    c.hello();
    c.send(
        kind::START_RUN,
        json!({"condition": "guiding_lines", "start_index": 1, "seed": 12, "heading": 0.0}),
    );
    c.expect(kind::SNAPSHOT);
    c.send(kind::INPUT, json!({"forward": 1.5, "turn": 0.0}));
    let (_, done) = c.until_complete();
    let done: RunComplete = serde_json::from_value(done.payload).map_err(|e| e.to_string())?;
    let file = done.record_file.ok_or("run was not recorded")?;
    let stored = read_run(&dir.path().join(file)).map_err(|e| e.to_string())?;
    let offline = measure_run(&stored.record, &corridor()).map_err(|e| e.to_string())?;
    let (Some(live_t), Some(off_t)) = (done.measures.travel_time, offline.travel_time) else {
        return Err(format!("run did not exit: {:?}", done.outcome));
    };
    let dt = (live_t - off_t).abs();
    let detail = format!("travel time {live_t:.3} s live vs {off_t:.3} s offline");
    let same = dt <= 1.0 / tick_rate
        && done.measures.exit_chosen == offline.exit_chosen
        && done.measures.correct_exit == offline.correct_exit
        && (done.measures.distance - offline.distance).abs() <= 1e-9
        && matches!(done.outcome, Outcome::Exited { .. });
    if same {
        Ok(detail)
    } else {
        Err(format!("{detail}; live {:?} offline {:?}", done.measures, offline))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("motion compression corpus", mocomp_corpus),
        ("analytic circle", analytic_circle),
        ("round-trip locomotion", round_trip),
        ("pathfinding oracle", pathfinding),
        ("policy behaviour", policy_behaviour),
        ("batch determinism", determinism),
        ("metrics fixtures", metrics_fixtures),
        ("social-force relaxation", relaxation),
        ("live/offline equivalence", live_offline),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
