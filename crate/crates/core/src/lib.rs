//! Simulation, gradient estimation and cycle-length optimization for two
//! signalized intersections in tandem.

pub mod baseline;
pub mod error;
pub mod harness;
pub mod ipa;
pub mod model;
pub mod optimizer;
pub mod sim;

pub use error::{Error, Result};
