//! Simulator for a polarization-diverse, true-heterodyne CV-QKD receiver.
//!
//! The chain runs transmitter -> fiber channel -> dual-polarization front end
//! -> per-branch pilot-aided DSP -> clock-driven CMA combiner -> parameter
//! estimation and asymptotic key rate. [`harness`] ties the stages together
//! into snapshots and sessions.

pub mod channel;
pub mod cma;
pub mod dsp;
pub mod error;
pub mod frontend;
pub mod harness;
pub mod rng;
pub mod security;
pub mod signal;
pub mod transmitter;

pub use error::{Error, Result};
pub use harness::{run_session, run_snapshot, SessionConfig, SessionOutput, SnapshotResult};
