//! Campaign harness around the fault attribution core.
//!
//! The harness turns declarative TOML configuration into executed
//! campaigns: it synthesizes datasets, runs every input against every
//! perturbation, persists a tamper-evident event log, and writes
//! attribution and robustness reports. The `faultline` binary is a
//! thin CLI over this library.

pub mod campaign;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod store;

pub use error::{HarnessError, Result};
