//! Data loading, training and experiment runners around `convland-core`.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod idx;
pub mod report;
pub mod train;

pub use error::{HarnessError, Result};
