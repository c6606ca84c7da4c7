//! Simulation lab for handover of ground terminals between LEO satellites.
//!
//! - [`orbital`]: constellation geometry and propagation
//! - [`link`]: link budget, measurement filtering, A3 event
//! - [`env`]: the multi-UE handover environment with RB and PRACH contention
//! - [`agents`]: conventional, random and learned decision policies
//! - [`drl`]: policy network, V-trace, actor-learner training
//! - [`expcli`]: experiment specs, evaluation, sweeps and CSV reports

pub mod agents;
pub mod drl;
pub mod env;
pub mod error;
pub mod expcli;
pub mod link;
pub mod orbital;

pub use error::{Error, Result};
