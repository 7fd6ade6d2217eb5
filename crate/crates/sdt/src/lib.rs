//! File formats, checkpoints, run configuration and the command-line
//! driver for the spike-driven depth transformer in `sdt-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod format;
