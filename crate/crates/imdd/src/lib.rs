//! Storage formats, experiment configuration and the command harness
//! around [`imdd_core`].

pub mod config;
pub mod error;
pub mod format;
pub mod harness;
pub mod model;

pub use config::{ExperimentConfig, Scheme};
pub use error::HarnessError;
