//! Human-in-the-loop evacuation simulator.
//!
//! A telepresent user (or a scripted stand-in) walks through a building
//! alongside simulated pedestrians under one of four wayfinding aids. The
//! crate provides the building model, the pedestrian agents, motion
//! compression for mapping a large virtual building onto a small tracked
//! room, the run engine that records trajectories, and the evaluation
//! metrics.

pub mod agents;
pub mod engine;
pub mod geometry;
pub mod metrics;
pub mod mocomp;
pub mod scenario;

pub use geometry::{PathPolyline, Point2, Pose, Segment, Vec2};
pub use scenario::{load_scenario, Exit, Scenario, ScenarioError, SignPlacement};
