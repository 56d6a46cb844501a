//! Experiment runner for community capacity-limitation pricing: single
//! cases with baselines and validation, (beta, v) sweeps, price tables.

pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod svg;
pub mod sweep;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
