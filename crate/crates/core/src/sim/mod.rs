//! Discrete-event simulator of bonded channel access with a range model
//! in which wider transmissions reach less far but interfere further.

pub mod config;
pub mod engine;
pub mod geometry;
pub mod mac;
pub mod queue;

pub use config::SimConfig;
pub use engine::{run, run_with_trace, Outcome, TxAttempt};
