//! Simulation, exact computation and limit laws for a planar random walk
//! that is pushed back toward the origin while it is on the coordinate axes.

pub mod engine;
pub mod error;
pub mod harness;
pub mod limits;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{LatticePoint, ModelParams, RegionClass};
