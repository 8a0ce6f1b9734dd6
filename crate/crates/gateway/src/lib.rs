//! Network service and command-line front end for the evacuation
//! simulator: the length-prefixed JSON protocol, live and replay servers,
//! and the offline batch, metrics and motion compression commands.

pub mod commands;
mod connection;
pub mod live;
pub mod protocol;
pub mod replay;

pub use live::{serve, ServeOptions};
pub use replay::{serve_replay, Recording};
