#![allow(dead_code)]

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use evacsim_core::{load_scenario, Scenario};
use evacsim_gateway::protocol::{self, kind, FrameError, WireMessage, PROTOCOL_VERSION};
use evacsim_gateway::{serve, serve_replay, Recording, ServeOptions};
use serde_json::{json, Value};

/// 12 m corridor, dead end at x = 0 and the exit at x = 12.
pub const CORRIDOR: &str = r#"{"id":"corridor","bounds":{"min":[-1,-1],"max":[13,3]},
    "walls":[[0,0,12,0],[0,2,12,2],[0,0,0,2]],
    "exits":[{"id":"E","portal":[12,0,12,2],"label":"east"}],
    "starts":[[2,1],[6,1],[9,1],[4,1]]}"#;

pub fn corridor() -> Scenario {
    load_scenario(CORRIDOR).unwrap()
}

pub fn start_live(scenario: Scenario, options: ServeOptions) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let scenario = Arc::new(scenario);
    thread::spawn(move || serve(listener, scenario, options));
    addr
}

pub fn start_replay(recording: Recording, speed: f64) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let recording = Arc::new(recording);
    thread::spawn(move || serve_replay(listener, recording, speed));
    addr
}

pub struct Client {
    pub stream: TcpStream,
    seq: u64,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
        stream.set_nodelay(true).unwrap();
        Client { stream, seq: 0 }
    }

    pub fn send(&mut self, kind: &str, payload: Value) {
        self.seq += 1;
        let m = WireMessage {
            kind: kind.to_string(),
            seq: self.seq,
            payload,
        };
        protocol::write_frame(&mut self.stream, &m).unwrap();
    }

    pub fn send_raw(&mut self, body: &[u8]) {
        use std::io::Write;
        self.stream.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
        self.stream.write_all(body).unwrap();
    }

    /// Next message, or `None` once the server has closed the connection.
    pub fn recv(&mut self) -> Option<WireMessage> {
        match protocol::read_frame(&mut self.stream) {
            Ok(Some(body)) => Some(protocol::parse_message(&body).unwrap()),
            Ok(None) => None,
            Err(FrameError::Io(e)) if e.kind() == io::ErrorKind::ConnectionReset => None,
            Err(e) => panic!("reading from server: {e}"),
        }
    }

    pub fn expect(&mut self, kind: &str) -> WireMessage {
        let m = self.recv().expect("connection closed");
        assert_eq!(m.kind, kind, "got {m:?}");
        m
    }

    pub fn expect_error(&mut self, code: &str) -> WireMessage {
        let m = self.expect(kind::ERROR);
        assert_eq!(m.payload["code"], code, "got {m:?}");
        m
    }

    pub fn hello(&mut self) -> WireMessage {
        self.send(kind::HELLO, json!({ "version": PROTOCOL_VERSION }));
        self.expect(kind::SCENARIO)
    }

    /// Reads snapshots until `run_complete`, returning both.
    pub fn until_complete(&mut self) -> (Vec<WireMessage>, WireMessage) {
        let mut snapshots = Vec::new();
        loop {
            let m = self.recv().expect("connection closed mid-run");
            match m.kind.as_str() {
                kind::SNAPSHOT => snapshots.push(m),
                kind::RUN_COMPLETE => return (snapshots, m),
                _ => panic!("unexpected {m:?}"),
            }
        }
    }
}
