//! Three-class overlapped speech detection.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numeric piece
//! of the toolkit: log-mel features and resampling, a small differentiable
//! layer library, the convolutional-recurrent detector, training-data
//! synthesis, sliding-window inference, SAD/OSD segment algebra for
//! diarization and the scoring metrics. File formats and the command line
//! live in the `osd3` companion crate.
//!
//! Frame labels use `0` for non-speech, `1` for a single speaker and `2`
//! for overlapped speech, on a 10 ms grid.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod diarization;
mod error;
pub mod features;
pub mod inference;
pub mod math;
pub mod model;
pub mod nn;
pub mod scoring;

pub use error::{Error, Result};

/// Frames per second of every label, score and feature track.
pub const FRAME_RATE: usize = 100;
/// Duration of one frame in seconds.
pub const FRAME_SECONDS: f64 = 0.01;
