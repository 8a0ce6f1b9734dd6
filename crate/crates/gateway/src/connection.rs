//! Per-connection plumbing shared by the live and replay servers: a reader
//! thread turning frames into events, and the handshake and envelope checks
//! every message goes through.

use std::io;
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver};
use std::thread;

use crate::protocol::{self, code, kind, FrameError, Hello, Outbox, WireMessage, PROTOCOL_VERSION};

pub(crate) enum Inbound {
    Message(WireMessage),
    Malformed(String),
    TooLarge(usize),
    Closed,
}

/// Reads frames on a separate thread so the caller can wait on messages
/// and its own clock at once.
pub(crate) fn spawn_reader(mut stream: TcpStream) -> Receiver<Inbound> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || loop {
        let event = match protocol::read_frame(&mut stream) {
            Ok(Some(body)) => match protocol::parse_message(&body) {
                Ok(m) => Inbound::Message(m),
                Err(e) => Inbound::Malformed(e),
            },
            Ok(None) | Err(FrameError::Io(_)) => Inbound::Closed,
            Err(FrameError::TooLarge(n)) => Inbound::TooLarge(n),
        };
        let last = matches!(event, Inbound::Closed | Inbound::TooLarge(_));
        if tx.send(event).is_err() || last {
            return;
        }
    });
    rx
}

pub(crate) enum Screened {
    Close,
    /// Answered or rejected; nothing left for the caller.
    Done,
    /// A valid `hello`; the caller replies with `scenario`.
    Greeted,
    /// A client request (`start_run` or `input`) after the handshake.
    Request(WireMessage),
}

pub(crate) struct Peer {
    pub out: Outbox<TcpStream>,
    greeted: bool,
    last_seq: Option<u64>,
}

impl Peer {
    pub fn new(stream: TcpStream) -> Self {
        Peer {
            out: Outbox::new(stream),
            greeted: false,
            last_seq: None,
        }
    }

    /// Shuts the socket down both ways, which also ends the reader thread.
    pub fn close(&self) {
        let _ = self.out.get_ref().shutdown(Shutdown::Both);
    }

    pub fn screen(&mut self, event: Inbound) -> io::Result<Screened> {
        let m = match event {
            Inbound::Closed => return Ok(Screened::Close),
            Inbound::TooLarge(n) => {
                self.out.error(
                    code::FRAME_TOO_LARGE,
                    format!("frame of {n} bytes exceeds the limit of {}", protocol::MAX_FRAME),
                    None,
                    true,
                )?;
                return Ok(Screened::Close);
            }
            Inbound::Malformed(e) => {
                self.out.error(code::MALFORMED, e, None, false)?;
                return Ok(Screened::Done);
            }
            Inbound::Message(m) => m,
        };
        let id = Some(m.seq);
        if self.last_seq.is_some_and(|last| m.seq <= last) {
            self.out.error(
                code::BAD_SEQ,
                format!("seq {} does not follow {}", m.seq, self.last_seq.unwrap_or_default()),
                id,
                false,
            )?;
            return Ok(Screened::Done);
        }
        self.last_seq = Some(m.seq);
        match m.kind.as_str() {
            kind::HELLO => {
                let hello: Hello = match protocol::payload(&m) {
                    Ok(h) => h,
                    Err(e) => {
                        self.out.error(code::MALFORMED, e, id, false)?;
                        return Ok(Screened::Done);
                    }
                };
                if hello.version != PROTOCOL_VERSION {
                    self.out.error(
                        code::VERSION_MISMATCH,
                        format!("server speaks {PROTOCOL_VERSION}, client sent {:?}", hello.version),
                        id,
                        true,
                    )?;
                    return Ok(Screened::Close);
                }
                if self.greeted {
                    self.out.error(code::ALREADY_GREETED, "hello was already exchanged", id, false)?;
                    return Ok(Screened::Done);
                }
                self.greeted = true;
                Ok(Screened::Greeted)
            }
            kind::SCENARIO | kind::SNAPSHOT | kind::RUN_COMPLETE | kind::ERROR => {
                self.out
                    .error(code::UNEXPECTED_TYPE, format!("{} is sent by the server only", m.kind), id, false)?;
                Ok(Screened::Done)
            }
            kind::START_RUN | kind::INPUT if !self.greeted => {
                self.out.error(code::HANDSHAKE_REQUIRED, "send hello first", id, false)?;
                Ok(Screened::Done)
            }
            kind::START_RUN | kind::INPUT => Ok(Screened::Request(m)),
            other => {
                self.out
                    .error(code::UNKNOWN_TYPE, format!("unknown message type {other:?}"), id, false)?;
                Ok(Screened::Done)
            }
        }
    }
}
