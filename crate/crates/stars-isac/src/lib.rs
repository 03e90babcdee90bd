//! Squared position error bound analysis and optimization for STARS-assisted
//! near-field integrated sensing and communication.

pub mod beamform;
pub mod bench;
pub mod channel;
pub mod conic;
pub mod deploy;
pub mod error;
pub mod estimate;
pub mod fim;
pub mod geometry;
pub mod sample;

pub use error::{Error, Result};
