mod common;

use std::time::Instant;

use common::{corridor, start_live, Client};
use evacsim_core::engine::{read_run, Outcome};
use evacsim_core::metrics::measure_run;
use evacsim_gateway::protocol::{code, kind, RunComplete, ScenarioMessage, MAX_FRAME};
use evacsim_gateway::ServeOptions;
use serde_json::json;

/// Start 2 is 3 m from the exit.
fn sprint() -> serde_json::Value {
    json!({"condition": "none", "start_index": 2, "seed": 4, "heading": 0.0})
}

#[test]
fn hello_returns_the_scenario() {
    let addr = start_live(corridor(), ServeOptions::default());
    let mut c = Client::connect(addr);
    let m = c.hello();
    assert_eq!(m.seq, 1);
    let s: ScenarioMessage = serde_json::from_value(m.payload).unwrap();
    assert_eq!(s.version, "evacsim/1");
    let doc = s.scenario.unwrap();
    assert_eq!(doc.walls.len(), corridor().walls.len());
    assert_eq!(doc, corridor().to_document());
    assert_eq!(s.snapshot_rate, 20.0);
}

#[test]
fn version_mismatch_closes_the_connection() {
    let addr = start_live(corridor(), ServeOptions::default());
    let mut c = Client::connect(addr);
    c.send(kind::HELLO, json!({"version": "evacsim/0"}));
    let e = c.expect_error(code::VERSION_MISMATCH);
    assert_eq!(e.payload["fatal"], true);
    assert_eq!(e.payload["in_reply_to"], 1);
    assert!(c.recv().is_none());
}

#[test]
fn bad_messages_get_errors_and_the_connection_survives() {
    let addr = start_live(corridor(), ServeOptions::default());
    let mut c = Client::connect(addr);
    c.send_raw(b"{not json");
    assert_eq!(c.expect_error(code::MALFORMED).payload["fatal"], false);
    c.send_raw(br#"{"type":"hello"}"#);
    c.expect_error(code::MALFORMED);
    c.send(kind::INPUT, json!({"forward": 1.0, "turn": 0.0}));
    c.expect_error(code::HANDSHAKE_REQUIRED);
    c.send("teleport", json!({}));
    c.expect_error(code::UNKNOWN_TYPE);
    c.send(kind::HELLO, json!({"version": 1}));
    c.expect_error(code::MALFORMED);
    c.hello();
    c.send(kind::HELLO, json!({"version": "evacsim/1"}));
    c.expect_error(code::ALREADY_GREETED);
    c.send(kind::SNAPSHOT, json!({}));
    c.expect_error(code::UNEXPECTED_TYPE);
    c.send(kind::INPUT, json!({"forward": 1.0, "turn": 0.0}));
    c.expect_error(code::NO_ACTIVE_RUN);
    c.send_raw(br#"{"type":"input","seq":1,"payload":{}}"#);
    c.expect_error(code::BAD_SEQ);
    // still usable
    c.send(kind::START_RUN, sprint());
    c.expect(kind::SNAPSHOT);
}

#[test]
fn invalid_start_runs_are_rejected() {
    let addr = start_live(corridor(), ServeOptions::default());
    let mut c = Client::connect(addr);
    c.hello();
    c.send(kind::START_RUN, json!({"condition": "none", "start_index": 99, "seed": 1}));
    let e = c.expect_error(code::INVALID_RUN);
    assert!(e.payload["message"].as_str().unwrap().contains("99"));
    c.send(kind::START_RUN, json!({"condition": "teleport", "start_index": 0, "seed": 1}));
    c.expect_error(code::MALFORMED);
    c.send(kind::START_RUN, json!({"condition": "none", "start_index": 0, "seed": 1, "participant_id": "a b"}));
    c.expect_error(code::INVALID_RUN);
    c.send(kind::START_RUN, json!({"condition": "none", "start_index": 0, "seed": 1, "timeout": -1.0}));
    c.expect_error(code::INVALID_RUN);
}

#[test]
fn oversized_frames_close_the_connection() {
    let addr = start_live(corridor(), ServeOptions::default());
    let mut c = Client::connect(addr);
    use std::io::Write;
    c.stream.write_all(&((MAX_FRAME + 1) as u32).to_be_bytes()).unwrap();
    let e = c.expect_error(code::FRAME_TOO_LARGE);
    assert_eq!(e.payload["fatal"], true);
    assert!(c.recv().is_none());
}

#[test]
fn driven_run_streams_ordered_snapshots_and_completes() {
    let dir = tempfile::tempdir().unwrap();
    let options = ServeOptions {
        tick_rate: 100.0,
        record_dir: Some(dir.path().to_path_buf()),
    };
    let addr = start_live(corridor(), options);
    let mut c = Client::connect(addr);
    c.hello();
    c.send(kind::START_RUN, sprint());
    let first = c.expect(kind::SNAPSHOT);
    assert_eq!(first.payload["t"], 0.0);
    assert_eq!(first.payload["run_state"]["state"], "active");
    c.send(kind::INPUT, json!({"forward": 2.0, "turn": 0.0}));
    c.send(kind::START_RUN, sprint());
    let wall = Instant::now();
    let mut seqs = vec![first.seq];
    let mut times = vec![0.0];
    let complete = loop {
        let m = c.recv().unwrap();
        seqs.push(m.seq);
        match m.kind.as_str() {
            kind::SNAPSHOT => times.push(m.payload["t"].as_f64().unwrap()),
            kind::ERROR => assert_eq!(m.payload["code"], code::RUN_ACTIVE),
            kind::RUN_COMPLETE => break m,
            _ => panic!("{m:?}"),
        }
    };
    let elapsed = wall.elapsed().as_secs_f64();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "server seq not consecutive");
    assert!(times.windows(2).all(|w| w[1] > w[0]), "snapshot times not increasing");
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(gaps[..gaps.len() - 1].iter().all(|g| (g - 0.05).abs() < 0.011), "{gaps:?}");

    let done: RunComplete = serde_json::from_value(complete.payload).unwrap();
    let Outcome::Exited { exit_id, t_exit } = &done.outcome else {
        panic!("{:?}", done.outcome)
    };
    assert_eq!(exit_id, "E");
    // 3 m at 2 m/s after the speed ramp, paced in real time
    assert!((1.4..2.5).contains(t_exit), "t_exit {t_exit}");
    assert!(elapsed >= 0.8 * t_exit, "ran {elapsed} s for {t_exit} s of simulation");

    // the exported record measures the same offline
    let path = dir.path().join(done.record_file.as_deref().unwrap());
    let stored = read_run(&path).unwrap();
    let offline = measure_run(&stored.record, &corridor()).unwrap();
    assert_eq!(offline, done.measures);
    assert_eq!(stored.record.samples.len(), done.sample_count);
}

#[test]
fn another_run_may_follow_and_autopilot_ignores_input() {
    let addr = start_live(corridor(), ServeOptions { tick_rate: 200.0, record_dir: None });
    let mut c = Client::connect(addr);
    c.hello();
    for seed in [1, 2] {
        c.send(
            kind::START_RUN,
            json!({"condition": "guiding_lines", "start_index": 2, "seed": seed, "autopilot": true, "run_index": seed}),
        );
        c.send(kind::INPUT, json!({"forward": 0.0, "turn": 3.0}));
        let (snaps, done) = c.until_complete();
        assert!(snaps.len() > 10);
        let done: RunComplete = serde_json::from_value(done.payload).unwrap();
        assert!(done.measures.correct_exit);
        assert_eq!(done.run.run_index, seed as u32);
        assert!(done.record_file.is_none());
    }
}

#[test]
fn tracked_input_is_accepted() {
    let addr = start_live(corridor(), ServeOptions { tick_rate: 100.0, record_dir: None });
    let mut c = Client::connect(addr);
    c.hello();
    c.send(kind::START_RUN, json!({"condition": "none", "start_index": 0, "seed": 1, "timeout": 1.0}));
    c.expect(kind::SNAPSHOT);
    for k in 0..10 {
        c.send(kind::INPUT, json!({"pose": {"x": 0.0, "y": -1.0 + 0.02 * k as f64, "heading": 1.5707963}}));
    }
    c.send(kind::INPUT, json!({"pose": {"x": 0.0, "y": "north", "heading": 0.0}}));
    c.expect_error(code::MALFORMED);
    let (snaps, done) = c.until_complete();
    assert!(snaps.iter().any(|s| s.payload.get("guidance_rotation").is_some()));
    assert_eq!(done.payload["outcome"]["kind"], "timed_out");
}
