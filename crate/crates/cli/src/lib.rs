//! File formats, checkpoints, the training loop and the subcommands of the
//! `osd3` command-line tool. All numerics live in `osd3-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod training;
pub mod wav;

pub use error::{CliError, Result};
