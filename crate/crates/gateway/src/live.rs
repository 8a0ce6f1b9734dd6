//! Live server: each connection drives its own sessions, ticked in real
//! time, with snapshots streamed at a fixed rate of simulated time.

use std::io;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc::RecvTimeoutError;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use evacsim_core::engine::{start_run, write_run, AvatarInput, RunConfig, Session, MAX_TICK};
use evacsim_core::metrics::measure_run;
use evacsim_core::{Pose, Scenario, Vec2};

use crate::connection::{spawn_reader, Inbound, Peer, Screened};
use crate::protocol::{
    self, code, kind, Input, Mode, RunComplete, ScenarioMessage, StartRun, WireMessage, PROTOCOL_VERSION,
    SNAPSHOT_RATE,
};

pub const DEFAULT_TICK_RATE: f64 = 60.0;
pub const MAX_TICK_RATE: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Ticks per second; each tick advances the run by 1/tick_rate s.
    pub tick_rate: f64,
    /// Completed runs are written here when set.
    pub record_dir: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            tick_rate: DEFAULT_TICK_RATE,
            record_dir: None,
        }
    }
}

impl ServeOptions {
    pub fn validate(&self) -> Result<(), String> {
        let min = 1.0 / MAX_TICK;
        if !(self.tick_rate >= min && self.tick_rate <= MAX_TICK_RATE) {
            return Err(format!("tick rate must be within [{min}, {MAX_TICK_RATE}] Hz"));
        }
        Ok(())
    }
}

/// Accepts connections until the listener fails, one thread each.
pub fn serve(listener: TcpListener, scenario: Arc<Scenario>, options: ServeOptions) -> io::Result<()> {
    options.validate().map_err(io::Error::other)?;
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        let scenario = Arc::clone(&scenario);
        let options = options.clone();
        thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            let guard = stream.try_clone();
            if let Err(e) = handle(stream, scenario, options) {
                eprintln!("connection {peer}: {e}");
            }
            if let Ok(s) = guard {
                let _ = s.shutdown(Shutdown::Both);
            }
        });
    }
    Ok(())
}

struct LiveRun {
    session: Session,
    input: AvatarInput,
    autopilot: bool,
    next_snapshot: f64,
    last_snapshot: f64,
}

fn handle(stream: TcpStream, scenario: Arc<Scenario>, options: ServeOptions) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let rx = spawn_reader(stream.try_clone()?);
    let mut peer = Peer::new(stream);
    let dt = 1.0 / options.tick_rate;
    let period = Duration::from_secs_f64(dt);
    let mut run: Option<LiveRun> = None;
    let mut next_tick = Instant::now();
    loop {
        let event = if run.is_none() {
            Some(rx.recv().unwrap_or(Inbound::Closed))
        } else if Instant::now() >= next_tick {
            // a due tick goes before queued messages
            None
        } else {
            match rx.recv_timeout(next_tick.saturating_duration_since(Instant::now())) {
                Ok(ev) => Some(ev),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => Some(Inbound::Closed),
            }
        };
        let Some(event) = event else {
            let live = run.as_mut().expect("ticking needs a run");
            next_tick += period;
            if tick(&mut peer, live, dt)? {
                let live = run.take().expect("run present");
                finish(&mut peer, live, &scenario, &options)?;
            }
            continue;
        };
        match peer.screen(event)? {
            Screened::Close => {
                peer.close();
                return Ok(());
            }
            Screened::Done => {}
            Screened::Greeted => peer.out.send(
                kind::SCENARIO,
                &ScenarioMessage {
                    version: PROTOCOL_VERSION.to_string(),
                    mode: Mode::Live,
                    scenario: Some(scenario.to_document()),
                    tick_rate: options.tick_rate,
                    snapshot_rate: SNAPSHOT_RATE,
                },
            )?,
            Screened::Request(m) if m.kind == kind::START_RUN => {
                if run.is_some() {
                    peer.out
                        .error(code::RUN_ACTIVE, "a run is already in progress", Some(m.seq), false)?;
                    continue;
                }
                match begin(&m, &scenario) {
                    Ok(live) => {
                        peer.out.send(kind::SNAPSHOT, &live.session.snapshot())?;
                        run = Some(live);
                        next_tick = Instant::now() + period;
                    }
                    Err((c, e)) => peer.out.error(c, e, Some(m.seq), false)?,
                }
            }
            Screened::Request(m) => {
                let Some(live) = run.as_mut() else {
                    peer.out.error(code::NO_ACTIVE_RUN, "no run in progress", Some(m.seq), false)?;
                    continue;
                };
                match protocol::payload::<Input>(&m).and_then(avatar_input) {
                    // the scripted policy walks the avatar; inputs are ignored
                    Ok(_) if live.autopilot => {}
                    Ok(input) => live.input = input,
                    Err(e) => peer.out.error(code::MALFORMED, e, Some(m.seq), false)?,
                }
            }
        }
    }
}

fn avatar_input(input: Input) -> Result<AvatarInput, String> {
    match input {
        Input::Velocity { forward, turn } if forward.is_finite() && turn.is_finite() => {
            Ok(AvatarInput::Velocity { forward, turn })
        }
        Input::Tracked { pose } if pose.x.is_finite() && pose.y.is_finite() && pose.heading.is_finite() => {
            Ok(AvatarInput::Tracked(Pose::new(Vec2::new(pose.x, pose.y), pose.heading)))
        }
        _ => Err("input values must be finite".into()),
    }
}

fn begin(m: &WireMessage, scenario: &Arc<Scenario>) -> Result<LiveRun, (&'static str, String)> {
    let req: StartRun = protocol::payload(m).map_err(|e| (code::MALFORMED, e))?;
    let invalid = |e: String| (code::INVALID_RUN, e);
    let mut config = RunConfig::new(&scenario.id, req.condition, req.start_index, req.seed);
    if let Some(p) = req.participant_id {
        config.participant_id = p;
    }
    if let Some(r) = req.run_index {
        config.run_index = r;
    }
    if let Some(t) = req.timeout {
        config.timeout = t;
    }
    if let Some(n) = req.agent_count {
        config.agent_count = n;
    }
    let mut session = start_run(config, Arc::clone(scenario)).map_err(|e| invalid(e.to_string()))?;
    if let Some(h) = req.heading {
        if !h.is_finite() {
            return Err(invalid("heading must be finite".into()));
        }
        session.face(h).map_err(|e| invalid(e.to_string()))?;
    }
    Ok(LiveRun {
        session,
        input: if req.autopilot { AvatarInput::Policy } else { AvatarInput::STAND },
        autopilot: req.autopilot,
        next_snapshot: 1.0 / SNAPSHOT_RATE,
        last_snapshot: 0.0,
    })
}

/// Advances the run one tick and publishes a snapshot when one is due.
/// Returns whether the run has ended.
fn tick(peer: &mut Peer, live: &mut LiveRun, dt: f64) -> io::Result<bool> {
    live.session.tick(dt, live.input).map_err(io::Error::other)?;
    if !live.session.is_active() {
        return Ok(true);
    }
    let t = live.session.time();
    if t + 1e-9 >= live.next_snapshot {
        peer.out.send(kind::SNAPSHOT, &live.session.snapshot())?;
        live.last_snapshot = t;
        while live.next_snapshot <= t + 1e-9 {
            live.next_snapshot += 1.0 / SNAPSHOT_RATE;
        }
    }
    Ok(false)
}

fn finish(peer: &mut Peer, live: LiveRun, scenario: &Scenario, options: &ServeOptions) -> io::Result<()> {
    let last = live.session.snapshot();
    if last.t > live.last_snapshot {
        peer.out.send(kind::SNAPSHOT, &last)?;
    }
    let record = live.session.into_record().expect("run has ended");
    let measures = match measure_run(&record, scenario) {
        Ok(m) => m,
        Err(e) => return peer.out.error(code::INTERNAL, e.to_string(), None, false),
    };
    let mut record_file = None;
    if let Some(dir) = &options.record_dir {
        match write_run(&record, Some(&measures), dir) {
            Ok(path) => record_file = path.file_name().map(|n| n.to_string_lossy().into_owned()),
            Err(e) => peer.out.error(code::INTERNAL, format!("could not record the run: {e}"), None, false)?,
        }
    }
    peer.out.send(
        kind::RUN_COMPLETE,
        &RunComplete {
            sample_count: record.samples.len(),
            distance_walked: record.distance_walked,
            run: record.config,
            outcome: record.outcome,
            measures,
            record_file,
        },
    )
}
