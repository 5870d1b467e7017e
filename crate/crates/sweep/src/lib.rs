//! Parameter sweeps, figure regeneration and Monte Carlo validation for
//! point-to-multipoint CV-QKD networks.

pub mod config;
pub mod error;
pub mod figures;
pub mod mcval;
pub mod report;
pub mod sweep;

pub use config::SweepConfig;
pub use error::{Result, SweepError};
pub use sweep::{run_sweep, Dataset, SweepRow};
