//! Independent reference implementations and random case generators used
//! to check the simulator in tests. Nothing here shares code paths with the
//! implementations under test beyond the basic geometry types.

pub mod buildings;
pub mod grid;
pub mod paths;
