//! Simulation, attack injection and multi-modal anomaly detection for
//! rooftop photovoltaics at the grid edge.

pub mod attack;
pub mod detect;
pub mod error;
pub mod eval;
pub mod feeder;
pub mod fusion;
pub mod rng;
pub mod suite;
pub mod svg;
pub mod timeseries;
pub mod workflow;

pub use error::{Error, Result};
