use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{Spectrogram, Waveform};
use crate::{Error, Result, HOP_LEN, N_BINS, WINDOW_LEN};

/// Symmetric Hann window `0.5 (1 - cos(2πn / (N - 1)))`.
pub fn hann_window(len: usize) -> Vec<f64> {
    let denom = (len - 1) as f64;
    (0..len).map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / denom).cos())).collect()
}

/// Number of complete analysis frames in `len` samples.
pub fn frame_count(len: usize) -> Option<usize> {
    (len >= WINDOW_LEN).then(|| (len - WINDOW_LEN) / HOP_LEN + 1)
}

/// Magnitude STFT: frame `t` covers samples `[128t, 128t + 254)`, Hann-windowed,
/// 254-point DFT, bins 0..=127. No centering or padding.
pub fn stft(w: &Waveform) -> Result<Spectrogram> {
    let samples = w.samples();
    let frames =
        frame_count(samples.len()).ok_or(Error::WaveformTooShort { len: samples.len(), window: WINDOW_LEN })?;
    let window = hann_window(WINDOW_LEN);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(WINDOW_LEN);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::default(); WINDOW_LEN];
    let mut values = Vec::with_capacity(frames * N_BINS);
    for t in 0..frames {
        let start = t * HOP_LEN;
        for (b, (x, w)) in buf.iter_mut().zip(samples[start..start + WINDOW_LEN].iter().zip(&window)) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf[..N_BINS].iter().map(|c| c.norm()));
    }
    Spectrogram::new(frames, values)
}
