//! Spectrogram export: raw little-endian f32 grid with an 8-byte
//! `(frames: u32, bins: u32)` header, and CSV with one frame per row.

use std::io::Write;
use std::path::Path;

use super::Spectrogram;
use crate::{Error, Result, N_BINS};

pub fn write_grid_bytes(spec: &Spectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + spec.values().len() * 4);
    out.extend_from_slice(&(spec.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(N_BINS as u32).to_le_bytes());
    for &v in spec.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn read_grid_bytes(bytes: &[u8]) -> Result<Spectrogram> {
    if bytes.len() < 8 {
        return Err(Error::MalformedGrid("missing 8-byte header".into()));
    }
    let frames = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let bins = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bins != N_BINS {
        return Err(Error::BinCountMismatch { bins, expected: N_BINS });
    }
    let body = &bytes[8..];
    if body.len() != frames * bins * 4 {
        return Err(Error::MalformedGrid(format!(
            "header declares {frames}x{bins} values but body holds {} bytes",
            body.len()
        )));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Spectrogram::new(frames, values)
}

pub fn write_grid(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_grid_bytes(spec))?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    read_grid_bytes(&std::fs::read(path)?)
}

pub fn write_csv(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in 0..spec.frames() {
        let row: Vec<String> = spec.frame(t).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
