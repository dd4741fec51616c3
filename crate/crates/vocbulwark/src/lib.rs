//! Watermarking for mel-to-waveform vocoders with a frozen backbone.
//!
//! The library wires together five pieces:
//!
//! - [`vocoder`]: a small trainable mel-to-waveform backbone exposing one
//!   injection hook after its first upsampling stage;
//! - [`adapter`]: the temporal adapter that turns a bit string into a
//!   time-invariant residual added at that hook;
//! - [`cage`]: the coarse-to-fine gated extractor recovering bits from raw
//!   (possibly attacked) audio;
//! - [`attack`]: calibrated distortions for training augmentation and
//!   robustness grids;
//! - [`train`] / [`eval`]: the accuracy-guided curriculum training loop and
//!   the fidelity/robustness benchmark.
//!
//! Everything runs on the minimal reverse-mode substrate in [`nn`]; see the
//! `examples/` directory for runnable walkthroughs of each capability.

pub mod adapter;
pub mod attack;
pub mod cage;
pub mod error;
pub mod signal;
pub mod vocoder;
pub mod nn;

pub use error::{Error, Result};
