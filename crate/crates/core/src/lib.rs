//! Simulation harness for auditing web search engines with scripted agents.
//!
//! Experiment designs, mock engines, the agent routine, the collector and the
//! post-hoc analytics all live here; `fleet` ties them into whole runs.

pub mod agent;
pub mod analytics;
pub mod collector;
pub mod config;
pub mod design;
pub mod engines;
pub mod error;
pub mod fleet;
pub mod record;
pub mod rotation;
pub mod seed;
pub mod time;

pub use error::{Error, Result};
