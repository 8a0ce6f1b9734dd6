//! Replay server: streams a recorded run as snapshots paced by the stored
//! sample times divided by the speed multiplier.

use std::io;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::Path;
use std::sync::mpsc::RecvTimeoutError;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use evacsim_core::engine::{
    read_run, start_run, AgentPose, AvatarSnapshot, Outcome, Overlays, RunRecord, RunState, Snapshot, SAMPLE_RATE,
};
use evacsim_core::metrics::{measure_run, RunMeasures};
use evacsim_core::Scenario;

use crate::connection::{spawn_reader, Inbound, Peer, Screened};
use crate::protocol::{code, kind, Mode, RunComplete, ScenarioMessage, PROTOCOL_VERSION};

/// A recorded run ready to be streamed.
#[derive(Debug, Clone)]
pub struct Recording {
    pub record: RunRecord,
    pub measures: RunMeasures,
    pub overlays: Overlays,
    pub scenario: Option<Arc<Scenario>>,
    pub file_name: String,
}

impl Recording {
    /// Reads the trajectory CSV and its sidecar. Measures come from the
    /// sidecar, or are computed when the scenario is given; overlays need
    /// the scenario.
    pub fn load(path: &Path, scenario: Option<Arc<Scenario>>) -> anyhow::Result<Self> {
        let stored = read_run(path)?;
        if let Some(s) = &scenario {
            anyhow::ensure!(
                s.id == stored.record.config.scenario_id,
                "record is for scenario {:?}, not {:?}",
                stored.record.config.scenario_id,
                s.id
            );
        }
        let measures = match (stored.measures, &scenario) {
            (Some(m), _) => m,
            (None, Some(s)) => measure_run(&stored.record, s)?,
            (None, None) => anyhow::bail!("{} has no stored measures; pass the scenario", path.display()),
        };
        let overlays = scenario
            .as_ref()
            .and_then(|s| start_run(stored.record.config.clone(), Arc::clone(s)).ok())
            .map(|session| session.overlays().clone())
            .unwrap_or_default();
        Ok(Recording {
            record: stored.record,
            measures,
            overlays,
            scenario,
            file_name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        })
    }

    pub fn snapshot(&self, i: usize) -> Snapshot {
        let s = &self.record.samples[i];
        let last = i + 1 == self.record.samples.len();
        Snapshot {
            t: s.t,
            avatar: AvatarSnapshot {
                x: s.avatar.position.x,
                y: s.avatar.position.y,
                heading: s.avatar.heading,
                speed: s.avatar_speed,
            },
            agents: s
                .agents
                .iter()
                .map(|a| AgentPose {
                    id: a.id,
                    x: a.pose.position.x,
                    y: a.pose.position.y,
                    heading: a.pose.heading,
                })
                .collect(),
            overlays: self.overlays.clone(),
            run_state: match (&self.record.outcome, last) {
                (_, false) => RunState::Active,
                (Outcome::Exited { exit_id, .. }, true) => RunState::Exited {
                    exit_id: exit_id.clone(),
                },
                (Outcome::TimedOut, true) => RunState::TimedOut,
            },
            guidance_rotation: None,
        }
    }

    pub fn completion(&self) -> RunComplete {
        RunComplete {
            run: self.record.config.clone(),
            outcome: self.record.outcome.clone(),
            measures: self.measures.clone(),
            distance_walked: self.record.distance_walked,
            sample_count: self.record.samples.len(),
            record_file: Some(self.file_name.clone()),
        }
    }
}

/// Accepts connections until the listener fails; every connection gets the
/// whole recording from the start.
pub fn serve_replay(listener: TcpListener, recording: Arc<Recording>, speed: f64) -> io::Result<()> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(io::Error::other("speed must be positive"));
    }
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        let recording = Arc::clone(&recording);
        thread::spawn(move || {
            let guard = stream.try_clone();
            if let Err(e) = handle(stream, &recording, speed) {
                eprintln!("replay connection: {e}");
            }
            if let Ok(s) = guard {
                let _ = s.shutdown(Shutdown::Both);
            }
        });
    }
    Ok(())
}

fn handle(stream: TcpStream, rec: &Recording, speed: f64) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let rx = spawn_reader(stream.try_clone()?);
    let mut peer = Peer::new(stream);
    let total = rec.record.samples.len();
    // started once the client has greeted
    let mut clock: Option<(Instant, usize)> = None;
    loop {
        let pending = clock.filter(|&(_, next)| next <= total);
        let event = match pending {
            None => Some(rx.recv().unwrap_or(Inbound::Closed)),
            Some((start, next)) => {
                let due = match rec.record.samples.get(next) {
                    Some(s) => start + Duration::from_secs_f64(s.t / speed),
                    None => start + Duration::from_secs_f64(rec.record.duration() / speed),
                };
                let now = Instant::now();
                if now >= due {
                    None
                } else {
                    match rx.recv_timeout(due - now) {
                        Ok(ev) => Some(ev),
                        Err(RecvTimeoutError::Timeout) => None,
                        Err(RecvTimeoutError::Disconnected) => Some(Inbound::Closed),
                    }
                }
            }
        };
        let Some(event) = event else {
            let (start, next) = pending.expect("streaming");
            if next < total {
                peer.out.send(kind::SNAPSHOT, &rec.snapshot(next))?;
            } else {
                peer.out.send(kind::RUN_COMPLETE, &rec.completion())?;
            }
            clock = Some((start, next + 1));
            continue;
        };
        match peer.screen(event)? {
            Screened::Close => {
                peer.close();
                return Ok(());
            }
            Screened::Done => {}
            Screened::Greeted => {
                peer.out.send(
                    kind::SCENARIO,
                    &ScenarioMessage {
                        version: PROTOCOL_VERSION.to_string(),
                        mode: Mode::Replay,
                        scenario: rec.scenario.as_ref().map(|s| s.to_document()),
                        // one snapshot per recorded sample
                        tick_rate: SAMPLE_RATE,
                        snapshot_rate: SAMPLE_RATE,
                    },
                )?;
                clock = Some((Instant::now(), 0));
            }
            // inputs have nothing to steer during a replay
            Screened::Request(m) if m.kind == kind::INPUT => {}
            Screened::Request(m) => {
                peer.out
                    .error(code::REPLAY_ONLY, "this server replays a recorded run", Some(m.seq), false)?;
            }
        }
    }
}
