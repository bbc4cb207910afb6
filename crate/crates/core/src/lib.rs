//! Unpaired voice conversion on linear magnitude spectrograms.
//!
//! The pipeline has two learned stages:
//!
//! * a cycle-consistent converter ([`converter`]) made of two stride-1
//!   residual convolutional generators and two spectrally normalized
//!   discriminators trained with hinge, cycle and identity losses;
//! * an autoregressive vocoder ([`vocoder`]) that turns spectrogram frames
//!   back into 16 kHz audio one sample at a time, predicting a single
//!   Gaussian per sample.
//!
//! Both networks run on the small reverse-mode engine in [`nn`]. The
//! [`oracles`] module holds brute-force reference computations and
//! [`verify`] compares the fast paths against them.

pub mod converter;
pub mod dsp;
pub mod error;
pub mod nn;
pub mod oracles;
pub mod trainer;
pub mod verify;
pub mod vocoder;

pub use error::{Error, Result};

/// Sample rate of every waveform handled by the pipeline.
pub const SAMPLE_RATE: u32 = 16_000;
/// Analysis window length in samples.
pub const WINDOW_LEN: usize = 254;
/// Hop between analysis frames in samples.
pub const HOP_LEN: usize = 128;
/// Frequency bins per spectrogram frame (`WINDOW_LEN / 2 + 1`).
pub const N_BINS: usize = 128;
