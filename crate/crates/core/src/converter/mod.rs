//! Cycle-consistent spectrogram converter: generators `G_xy`, `G_yx`,
//! discriminators `D_x`, `D_y`, and their hinge/cycle/identity objectives.

mod loss;
mod nets;

pub use loss::{discriminator_loss, generator_loss, DiscriminatorLoss, GeneratorLoss};
pub use nets::{BoundDiscriminator, BoundGenerator, ConvLayer, Discriminator, Generator};

use rand::Rng;

use crate::dsp::Spectrogram;
use crate::nn::{ParamId, ParamStore, Tensor, LEAKY_SLOPE};
use crate::{Error, Result, N_BINS};

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterConfig {
    /// Hidden channels (twice the bin count by default).
    pub channels: usize,
    /// Residual blocks in each generator.
    pub n_g: usize,
    /// Residual blocks in each discriminator.
    pub n_d: usize,
    /// Kernel of the residual-block convolutions.
    pub kernel: usize,
    /// Kernel of the entry and exit projections.
    pub edge_kernel: usize,
    pub slope: f64,
    /// Standard deviation of the discriminator input noise.
    pub noise_sigma: f64,
    pub crop_frames: usize,
    pub trim_frames: usize,
    pub lambda_cy: f64,
    pub lambda_id: f64,
    pub margin: f64,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        Self {
            channels: 2 * N_BINS,
            n_g: 7,
            n_d: 6,
            kernel: 5,
            edge_kernel: 1,
            slope: LEAKY_SLOPE,
            noise_sigma: 0.1,
            crop_frames: 160,
            trim_frames: 16,
            lambda_cy: 10.0,
            lambda_id: 1.0,
            margin: 0.5,
        }
    }
}

impl ConverterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.crop_frames <= 2 * self.trim_frames {
            return bad("crop_frames must exceed 2 * trim_frames");
        }
        if self.kernel % 2 == 0 || self.edge_kernel % 2 == 0 {
            return bad("convolution kernels must be odd");
        }
        if self.channels == 0 {
            return bad("channels must be positive");
        }
        if !(self.lambda_cy > 0.0) || !(self.lambda_id >= 0.0) || !(self.margin > 0.0) {
            return bad("need lambda_cy > 0, lambda_id >= 0, margin > 0");
        }
        if !(self.noise_sigma >= 0.0) || !(self.slope > 0.0 && self.slope < 1.0) {
            return bad("need noise_sigma >= 0 and 0 < slope < 1");
        }
        Ok(())
    }

    /// Frames seen by the discriminators.
    pub fn critic_frames(&self) -> usize {
        self.crop_frames - 2 * self.trim_frames
    }
}

/// Conversion direction; speaker A is `x`, speaker B is `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AToB,
    BToA,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a2b" => Ok(Self::AToB),
            "b2a" => Ok(Self::BToA),
            other => Err(Error::InvalidConfig(format!("direction must be a2b or b2a, got {other:?}"))),
        }
    }
}

/// The four networks of the converter and the loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterPair {
    pub config: ConverterConfig,
    pub store: ParamStore,
    pub g_xy: Generator,
    pub g_yx: Generator,
    pub d_x: Discriminator,
    pub d_y: Discriminator,
}

impl ConverterPair {
    pub fn new<R: Rng + ?Sized>(config: ConverterConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let g_xy = Generator::new(&mut store, "g_xy", &config, rng)?;
        let g_yx = Generator::new(&mut store, "g_yx", &config, rng)?;
        let d_x = Discriminator::new(&mut store, "d_x", &config, rng)?;
        let d_y = Discriminator::new(&mut store, "d_y", &config, rng)?;
        Ok(Self { config, store, g_xy, g_yx, d_x, d_y })
    }

    pub fn generator_params(&self) -> Vec<ParamId> {
        let mut p = self.g_xy.params();
        p.extend(self.g_yx.params());
        p
    }

    pub fn discriminator_params(&self) -> Vec<ParamId> {
        let mut p = self.d_x.params();
        p.extend(self.d_y.params());
        p
    }

    /// The same model with the roles of the two speakers exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            config: self.config.clone(),
            store: self.store.clone(),
            g_xy: self.g_yx.clone(),
            g_yx: self.g_xy.clone(),
            d_x: self.d_y.clone(),
            d_y: self.d_x.clone(),
        }
    }

    pub fn generator(&self, direction: Direction) -> &Generator {
        match direction {
            Direction::AToB => &self.g_xy,
            Direction::BToA => &self.g_yx,
        }
    }

    pub fn power_iterate(&mut self, round_to_f32: bool) -> usize {
        self.d_x.power_iterate(&self.store, round_to_f32) + self.d_y.power_iterate(&self.store, round_to_f32)
    }

    pub fn refresh_sigmas(&mut self) {
        self.d_x.refresh_sigmas(&self.store);
        self.d_y.refresh_sigmas(&self.store);
    }
}

/// Converter output before hand-off to the vocoder. Values may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedSpectrogram {
    frames: usize,
    /// Bins-major grid, `N_BINS × frames`.
    values: Vec<f64>,
}

impl ConvertedSpectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn value(&self, frame: usize, bin: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }

    /// Clamps negatives to zero, giving a valid magnitude spectrogram.
    pub fn to_spectrogram(&self) -> Result<Spectrogram> {
        Spectrogram::from_bins_major(self.frames, &self.values)
    }

    pub fn peak_bin(&self, frame: usize) -> usize {
        crate::dsp::argmax(&(0..N_BINS).map(|b| self.value(frame, b)).collect::<Vec<_>>())
    }
}

/// Removes `trim` frames from both edges of a spectrogram.
pub fn trim_edges(spec: &Spectrogram, trim: usize) -> Result<Spectrogram> {
    if spec.frames() <= 2 * trim {
        return Err(Error::TooFewFramesToTrim { frames: spec.frames(), trim });
    }
    spec.slice(trim, spec.frames() - 2 * trim)
}

/// `[1, bins, frames]` tensor for one spectrogram.
pub fn spectrogram_tensor(spec: &Spectrogram) -> Tensor {
    Tensor::new(vec![1, N_BINS, spec.frames()], spec.to_bins_major()).expect("sizes agree")
}

/// Stacks equally long spectrograms into `[batch, bins, frames]`.
pub fn batch_tensor(specs: &[Spectrogram]) -> Result<Tensor> {
    let frames = specs.first().ok_or(Error::EmptyInput("batch"))?.frames();
    let mut data = Vec::with_capacity(specs.len() * N_BINS * frames);
    for s in specs {
        if s.frames() != frames {
            return Err(Error::FrameCountMismatch { expected: frames, found: s.frames() });
        }
        data.extend(s.to_bins_major());
    }
    Tensor::new(vec![specs.len(), N_BINS, frames], data)
}

/// Converts a whole utterance: zero-pads `trim_frames` on each edge, runs the
/// generator, and trims the padding away so output frame `t` aligns with input
/// frame `t`.
pub fn convert_utterance(
    pair: &ConverterPair,
    spec: &Spectrogram,
    direction: Direction,
) -> Result<ConvertedSpectrogram> {
    if spec.frames() == 0 {
        return Err(Error::EmptyInput("convert_utterance"));
    }
    let pad = pair.config.trim_frames;
    let (t, padded_t) = (spec.frames(), spec.frames() + 2 * pad);
    let mut data = vec![0.0; N_BINS * padded_t];
    let src = spec.to_bins_major();
    for b in 0..N_BINS {
        data[b * padded_t + pad..b * padded_t + pad + t].copy_from_slice(&src[b * t..(b + 1) * t]);
    }
    let x = Tensor::new(vec![1, N_BINS, padded_t], data)?;
    let y = pair.generator(direction).infer(&pair.store, &x)?;
    let values = y.data().chunks_exact(padded_t).flat_map(|row| row[pad..pad + t].iter().copied()).collect();
    Ok(ConvertedSpectrogram { frames: t, values })
}
