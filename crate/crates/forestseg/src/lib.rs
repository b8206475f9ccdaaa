//! File formats, configuration, synthetic plots, the segmentation pipeline
//! and evaluation for the `forestseg` command-line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use config::{Config, Preset};
pub use error::{AppError, Result};
