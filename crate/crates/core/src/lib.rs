//! Fourth-order hierarchical sparse arrays and fourth-order cumulant
//! direction finding.

pub mod coarray;
pub mod designs;
pub mod experiment;
pub mod metrics;
pub mod music;
pub mod reconstruct;
pub mod signal;
