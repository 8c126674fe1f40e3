//! Data ingestion, temporal subsampling, experiment orchestration and
//! report writing for `trackuq`.

pub mod app;
pub mod config;
pub mod ctc;
pub mod error;
pub mod experiment;
pub mod jsonl;
pub mod method;
pub mod report;
pub mod sequence;

pub use error::{CliError, Result};
