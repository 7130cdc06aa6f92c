//! Library side of the `dner` command: run configuration and pipeline stages.

pub mod config;
pub mod pipeline;
