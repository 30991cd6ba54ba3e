//! File formats, evaluation harness and command-line driver for `wristpipe-core`.

pub mod config;
pub mod formats;
pub mod pipeline;
pub mod records;
pub mod scene_io;
pub mod seeds;
pub mod cli;
