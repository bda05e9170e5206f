//! Storage, synthetic data, the end-to-end pipeline, and the `d2s` command
//! line on top of `d2s-core`.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
