//! Wire format: each message is a 4-byte big-endian length followed by that
//! many bytes of UTF-8 JSON, an object with `type`, `seq` and `payload`.

use std::io::{self, Read, Write};

use evacsim_core::engine::{Condition, Outcome, RunConfig};
use evacsim_core::metrics::RunMeasures;
use evacsim_core::scenario::ScenarioDocument;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: &str = "evacsim/1";
/// Frames longer than this are refused and the connection is closed.
pub const MAX_FRAME: usize = 1 << 20;
pub const SNAPSHOT_RATE: f64 = 20.0;

pub mod kind {
    pub const HELLO: &str = "hello";
    pub const SCENARIO: &str = "scenario";
    pub const START_RUN: &str = "start_run";
    pub const INPUT: &str = "input";
    pub const SNAPSHOT: &str = "snapshot";
    pub const RUN_COMPLETE: &str = "run_complete";
    pub const ERROR: &str = "error";
}

/// Error codes carried in `error` payloads.
pub mod code {
    pub const MALFORMED: &str = "malformed";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const UNEXPECTED_TYPE: &str = "unexpected_type";
    pub const BAD_SEQ: &str = "bad_seq";
    pub const VERSION_MISMATCH: &str = "version_mismatch";
    pub const HANDSHAKE_REQUIRED: &str = "handshake_required";
    pub const ALREADY_GREETED: &str = "already_greeted";
    pub const RUN_ACTIVE: &str = "run_active";
    pub const NO_ACTIVE_RUN: &str = "no_active_run";
    pub const INVALID_RUN: &str = "invalid_run";
    pub const REPLAY_ONLY: &str = "replay_only";
    pub const FRAME_TOO_LARGE: &str = "frame_too_large";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the limit of {MAX_FRAME}")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_frame<W: Write>(w: &mut W, message: &WireMessage) -> io::Result<()> {
    let body = serde_json::to_vec(message).map_err(io::Error::other)?;
    let len = u32::try_from(body.len()).map_err(|_| io::Error::other("message too long"))?;
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(&body);
    w.write_all(&buf)?;
    w.flush()
}

/// Next frame body, or `None` when the peer closed the stream between
/// frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, FrameError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

/// Parses a frame body into an envelope; the payload is checked later,
/// per type.
pub fn parse_message(body: &[u8]) -> Result<WireMessage, String> {
    let text = std::str::from_utf8(body).map_err(|e| format!("frame is not UTF-8: {e}"))?;
    serde_json::from_str(text).map_err(|e| format!("not a message envelope: {e}"))
}

pub fn payload<T: for<'de> Deserialize<'de>>(message: &WireMessage) -> Result<T, String> {
    serde_json::from_value(message.payload.clone()).map_err(|e| format!("bad {} payload: {e}", message.kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMessage {
    pub version: String,
    pub mode: Mode,
    /// Absent when a replay was started without the scenario file.
    pub scenario: Option<ScenarioDocument>,
    /// Physics ticks per second of wall time.
    pub tick_rate: f64,
    pub snapshot_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRun {
    pub condition: Condition,
    pub start_index: usize,
    pub seed: u64,
    #[serde(default)]
    pub participant_id: Option<String>,
    #[serde(default)]
    pub run_index: Option<u32>,
    #[serde(default)]
    pub timeout: Option<f64>,
    #[serde(default)]
    pub agent_count: Option<usize>,
    /// Initial avatar heading, rad; drawn from the seed when absent.
    #[serde(default)]
    pub heading: Option<f64>,
    /// Let the condition's scripted policy walk the avatar.
    #[serde(default)]
    pub autopilot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackedPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Velocity command, or the tracked pose of the user in the workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Velocity { forward: f64, turn: f64 },
    Tracked { pose: TrackedPose },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComplete {
    pub run: RunConfig,
    pub outcome: Outcome,
    pub measures: RunMeasures,
    pub distance_walked: f64,
    pub sample_count: usize,
    /// Trajectory CSV written for this run, if the server records runs.
    #[serde(default)]
    pub record_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    /// `seq` of the offending message, when it could be read.
    #[serde(default)]
    pub in_reply_to: Option<u64>,
    /// The server closes the connection after a fatal error.
    pub fatal: bool,
}

/// Writing half of a connection, numbering outbound messages.
pub struct Outbox<W: Write> {
    writer: W,
    seq: u64,
}

impl<W: Write> Outbox<W> {
    pub fn new(writer: W) -> Self {
        Outbox { writer, seq: 0 }
    }

    pub fn send<T: Serialize>(&mut self, kind: &str, payload: &T) -> io::Result<()> {
        self.seq += 1;
        let message = WireMessage {
            kind: kind.to_string(),
            seq: self.seq,
            payload: serde_json::to_value(payload).map_err(io::Error::other)?,
        };
        write_frame(&mut self.writer, &message)
    }

    pub fn error(&mut self, code: &str, message: impl Into<String>, in_reply_to: Option<u64>, fatal: bool) -> io::Result<()> {
        self.send(
            kind::ERROR,
            &ErrorPayload {
                code: code.to_string(),
                message: message.into(),
                in_reply_to,
                fatal,
            },
        )
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn get_ref(&self) -> &W {
        &self.writer
    }
}
