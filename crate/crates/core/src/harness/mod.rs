//! Experiment harness: metrics, sweeps and persistence.

pub mod crosscheck;
pub mod io;
pub mod metrics;
pub mod scenario;
pub mod sweep;
