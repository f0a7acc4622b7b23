//! Simulation and parameter inference for an NV centre coupled to a small
//! cluster of dark electron spins.

pub mod engine;
pub mod error;
pub mod inference;
pub mod lattice;
pub mod physics;
pub mod sequence;
pub mod signal;

pub use error::{Error, Result};
