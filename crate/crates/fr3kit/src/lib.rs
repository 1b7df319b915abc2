//! Processing and evaluation toolkit for dual-band (8/15 GHz) massive-MIMO
//! channel soundings under an equal-aperture constraint.
//!
//! The pipeline runs from raw CIR captures through calibration, power delay
//! profiles and SAGE multipath extraction to large-scale statistics and
//! system-level metrics. [`synthgen`] produces statistically matched synthetic
//! datasets for desk-scale work.

pub mod array;
pub mod channel;
pub mod error;
pub mod pipeline;
pub mod sage;
pub mod sounding;
pub mod stats;
pub mod synthgen;
pub mod sysperf;
pub mod units;

pub use error::{Error, Result};
