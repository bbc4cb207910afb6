use std::path::Path;

use super::{Waveform, MAX_SAMPLE};
use crate::{Error, Result, SAMPLE_RATE};

/// Divisor mapping 16-bit integers onto `[-1, 1)`.
pub const PCM_SCALE: f64 = 32768.0;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let malformed = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::MalformedWav { path: path.to_path_buf(), detail: other.to_string() },
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => {
            Error::UnsupportedEncoding { path: path.to_path_buf(), detail: "format tag not supported".into() }
        }
        other => malformed(other),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("{:?} with {} bits per sample", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(Error::WrongChannelCount { path: path.to_path_buf(), channels: spec.channels });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::WrongSampleRate { path: path.to_path_buf(), rate: spec.sample_rate });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(malformed)?;
    Ok(Waveform { samples })
}

pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    write_pcm16(w.samples(), path)
}

/// Writes 16-bit mono PCM at 16 kHz. Samples are clamped to `[-1, 1 - 1/32768]`
/// and rounded to the nearest integer step.
pub fn write_pcm16(samples: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(to_io)?;
    for &s in samples {
        let s = if s.is_nan() { 0.0 } else { s.clamp(-1.0, MAX_SAMPLE) };
        writer.write_sample((s * PCM_SCALE).round() as i16).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}
