//! Spectrogram images as binary portable graymaps.

use cyclevox_core::dsp::Spectrogram;
use cyclevox_core::N_BINS;

/// `log(1 + v)` scaled so the largest value maps to 255, one column per frame
/// and one row per bin with bin 0 on the bottom row. An all-zero grid is black.
pub fn pixels(spec: &Spectrogram) -> Vec<u8> {
    let frames = spec.frames();
    let logs: Vec<f64> = spec.values().iter().map(|v| v.ln_1p()).collect();
    let max = logs.iter().copied().fold(0.0, f64::max);
    let mut out = vec![0u8; frames * N_BINS];
    if max <= 0.0 {
        return out;
    }
    for t in 0..frames {
        for bin in 0..N_BINS {
            let row = N_BINS - 1 - bin;
            out[row * frames + t] = (255.0 * logs[t * N_BINS + bin] / max).round() as u8;
        }
    }
    out
}

/// The `P5` file for [`pixels`].
pub fn pgm(spec: &Spectrogram) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", spec.frames(), N_BINS).into_bytes();
    out.extend(pixels(spec));
    out
}
