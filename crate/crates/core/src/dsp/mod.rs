//! Audio I/O and the linear-spectrogram front end.

mod grid;
mod stft;
mod wav;

pub use grid::{read_grid, read_grid_bytes, write_csv, write_grid, write_grid_bytes};
pub use stft::{frame_count, hann_window, stft};
pub use wav::{read_wav, write_pcm16, write_wav, PCM_SCALE};

use crate::{Error, Result, N_BINS, SAMPLE_RATE};

/// Largest amplitude representable in 16-bit PCM.
pub const MAX_SAMPLE: f64 = 32767.0 / 32768.0;

/// Mono audio at [`SAMPLE_RATE`] with every sample in `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, s)| !(-1.0..1.0).contains(*s)) {
            return Err(Error::SampleOutOfRange { index, value });
        }
        Ok(Self { samples })
    }

    /// Builds a waveform after clamping every sample to `[-1, MAX_SAMPLE]`.
    /// Non-finite samples become silence.
    pub fn clamped(samples: impl IntoIterator<Item = f64>) -> Self {
        let samples =
            samples.into_iter().map(|s| if s.is_finite() { s.clamp(-1.0, MAX_SAMPLE) } else { 0.0 }).collect();
        Self { samples }
    }

    pub fn silence(len: usize) -> Self {
        Self { samples: vec![0.0; len] }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }
}

/// Linear magnitude spectrogram: `frames` rows of [`N_BINS`] nonnegative values,
/// stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    values: Vec<f64>,
}

impl Spectrogram {
    pub fn new(frames: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * N_BINS {
            return Err(Error::BinCountMismatch {
                bins: if frames == 0 { values.len() } else { values.len() / frames },
                expected: N_BINS,
            });
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidMagnitude { frame: i / N_BINS, bin: i % N_BINS });
        }
        Ok(Self { frames, values })
    }

    pub fn zeros(frames: usize) -> Self {
        Self { frames, values: vec![0.0; frames * N_BINS] }
    }

    /// Builds a spectrogram from a bins-major (`N_BINS × frames`) grid, the
    /// layout used by the convolutional networks. Negative values are set to 0;
    /// non-finite values are rejected.
    pub fn from_bins_major(frames: usize, data: &[f64]) -> Result<Self> {
        if data.len() != frames * N_BINS {
            return Err(Error::ShapeMismatch {
                op: "from_bins_major",
                detail: format!("{} values for {frames} frames", data.len()),
            });
        }
        let mut values = vec![0.0; frames * N_BINS];
        for bin in 0..N_BINS {
            for t in 0..frames {
                values[t * N_BINS + bin] = crate::nn::kernels::relu(data[bin * frames + t]);
            }
        }
        Self::new(frames, values)
    }

    /// Bins-major copy (`N_BINS × frames`).
    pub fn to_bins_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for t in 0..self.frames {
            for bin in 0..N_BINS {
                out[bin * self.frames + t] = self.values[t * N_BINS + bin];
            }
        }
        out
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        N_BINS
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * N_BINS..(t + 1) * N_BINS]
    }

    /// Contiguous frames `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames {
            return Err(Error::FrameCountMismatch { expected: start + len, found: self.frames });
        }
        Ok(Self { frames: len, values: self.values[start * N_BINS..(start + len) * N_BINS].to_vec() })
    }

    /// Index of the largest bin in frame `t` (first one on ties).
    pub fn peak_bin(&self, t: usize) -> usize {
        argmax(self.frame(t))
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
