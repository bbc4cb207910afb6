//! Brute-force reference computations. Nothing here calls into `nn` or `dsp`
//! arithmetic: every routine is written out with plain loops so it can
//! independently check the fast paths.

use std::f64::consts::PI;
use std::fmt;

use crate::{Error, Result};

/// Outcome of comparing one computation against its oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceReport {
    pub name: String,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ToleranceReport {
    /// Element-wise comparison. An element passes when its absolute error is at
    /// most `abs_floor` or its relative error (against the larger magnitude of
    /// the pair) is below `rel_tol`.
    pub fn compare(name: impl Into<String>, actual: &[f64], expected: &[f64], rel_tol: f64, abs_floor: f64) -> Self {
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        let mut pass = actual.len() == expected.len();
        for (&a, &e) in actual.iter().zip(expected) {
            let abs = (a - e).abs();
            let scale = a.abs().max(e.abs());
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
            if !(abs <= abs_floor || rel < rel_tol) {
                pass = false;
            }
        }
        Self { name: name.into(), max_abs_error: max_abs, max_rel_error: max_rel, tolerance: rel_tol, pass }
    }

    /// Relative error measured against the largest expected magnitude, for
    /// vectors whose small entries are dominated by rounding (spectra).
    pub fn compare_scaled(name: impl Into<String>, actual: &[f64], expected: &[f64], rel_tol: f64) -> Self {
        let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let max_abs = actual.iter().zip(expected).fold(0.0f64, |m, (a, e)| m.max((a - e).abs()));
        let max_rel = max_abs / scale;
        let pass = actual.len() == expected.len() && (max_rel <= rel_tol || max_abs == 0.0);
        Self { name: name.into(), max_abs_error: max_abs, max_rel_error: max_rel, tolerance: rel_tol, pass }
    }

    /// A check whose error is a single measured quantity against a bound.
    pub fn bound(name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_abs_error: error,
            max_rel_error: error,
            tolerance,
            pass: error.is_finite() && error <= tolerance,
        }
    }

    /// Merges reports under one name: worst errors, pass only if all pass.
    pub fn combine(name: impl Into<String>, reports: &[ToleranceReport]) -> Self {
        Self {
            name: name.into(),
            max_abs_error: reports.iter().fold(0.0, |m, r| m.max(r.max_abs_error)),
            max_rel_error: reports.iter().fold(0.0, |m, r| m.max(r.max_rel_error)),
            tolerance: reports.iter().fold(0.0, |m, r| m.max(r.tolerance)),
            pass: !reports.is_empty() && reports.iter().all(|r| r.pass),
        }
    }
}

impl fmt::Display for ToleranceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\tmax_abs={:.3e}\tmax_rel={:.3e}\ttol={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.max_abs_error,
            self.max_rel_error,
            self.tolerance
        )
    }
}

const FRAME: usize = 254;

fn oracle_window(n: usize) -> f64 {
    0.5 - 0.5 * (2.0 * PI * n as f64 / (FRAME as f64 - 1.0)).cos()
}

/// Hann-windowed direct DFT of a 254-sample frame: all 254 complex bins.
pub fn dft_oracle_full(frame: &[f64]) -> Result<Vec<(f64, f64)>> {
    if frame.len() != FRAME {
        return Err(Error::ShapeMismatch { op: "dft_oracle", detail: format!("{} samples", frame.len()) });
    }
    let windowed: Vec<f64> = frame.iter().enumerate().map(|(n, x)| x * oracle_window(n)).collect();
    Ok((0..FRAME)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, x) in windowed.iter().enumerate() {
                // reduce the phase index first so large k·n stays exact
                let angle = -2.0 * PI * ((k * n) % FRAME) as f64 / FRAME as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re, im)
        })
        .collect())
}

/// Magnitudes of bins 0..=127 of the windowed direct DFT.
pub fn dft_oracle(frame: &[f64]) -> Result<Vec<f64>> {
    Ok(dft_oracle_full(frame)?.into_iter().take(FRAME / 2 + 1).map(|(re, im)| re.hypot(im)).collect())
}

/// Sum of squared windowed samples of a frame (time-domain energy).
pub fn windowed_energy(frame: &[f64]) -> f64 {
    frame.iter().enumerate().map(|(n, x)| (x * oracle_window(n)).powi(2)).sum()
}

/// Triple-loop stride-1 convolution, zero padding `(kernel - 1) / 2` per edge.
/// `x: [c_in][frames]`, `w: [c_out][c_in][kernel]`.
pub fn naive_conv1d(
    x: &[f64],
    c_in: usize,
    frames: usize,
    w: &[f64],
    bias: &[f64],
    c_out: usize,
    kernel: usize,
) -> Vec<f64> {
    let pad = (kernel - 1) / 2;
    let mut out = vec![0.0; c_out * frames];
    for co in 0..c_out {
        for t in 0..frames {
            let mut acc = bias[co];
            for ci in 0..c_in {
                for k in 0..kernel {
                    let src = t as isize + k as isize - pad as isize;
                    if src >= 0 && (src as usize) < frames {
                        acc += w[(co * c_in + ci) * kernel + k] * x[ci * frames + src as usize];
                    }
                }
            }
            out[co * frames + t] = acc;
        }
    }
    out
}

/// `w · x + b` by explicit dot products; `w: [n_out][n_in]`.
pub fn naive_linear(x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter().enumerate().map(|(o, b)| b + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>()).collect()
}

/// Per-channel arithmetic mean of `[channels][frames]`.
pub fn naive_mean(x: &[f64], channels: usize, frames: usize) -> Vec<f64> {
    (0..channels)
        .map(|c| {
            let mut s = 0.0;
            for t in 0..frames {
                s += x[c * frames + t];
            }
            s / frames as f64
        })
        .collect()
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h` for every coordinate.
pub fn finite_difference_grad<F>(mut f: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p);
        p[i] = orig - step;
        let down = f(&p);
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteEvaluation(i));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Largest singular value from cyclic Jacobi eigen-iteration on the smaller
/// Gram matrix (`W Wᵀ` or `Wᵀ W`), iterated until the off-diagonal mass is
/// below `1e-8` relative to the diagonal.
pub fn singular_value_oracle(w: &[f64], rows: usize, cols: usize) -> f64 {
    let (n, gram) = if rows <= cols {
        let mut g = vec![0.0; rows * rows];
        for i in 0..rows {
            for j in 0..rows {
                g[i * rows + j] = (0..cols).map(|k| w[i * cols + k] * w[j * cols + k]).sum();
            }
        }
        (rows, g)
    } else {
        let mut g = vec![0.0; cols * cols];
        for i in 0..cols {
            for j in 0..cols {
                g[i * cols + j] = (0..rows).map(|k| w[k * cols + i] * w[k * cols + j]).sum();
            }
        }
        (cols, g)
    };
    let mut a = gram;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i].powi(2)).sum();
        if off.sqrt() <= 1e-8 * diag.sqrt().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max).max(0.0).sqrt()
}

/// Parameter trace of bias-corrected Adam on a scalar, by the textbook recurrence.
pub fn adam_recurrence_oracle(p0: f64, grads: &[f64], alpha: f64, beta1: f64, beta2: f64, eps: f64) -> Vec<f64> {
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    let mut trace = Vec::with_capacity(grads.len());
    for (i, &g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        let m_hat = m / (1.0 - beta1.powi(t));
        let v_hat = v / (1.0 - beta2.powi(t));
        p -= alpha * m_hat / (v_hat.sqrt() + eps);
        trace.push(p);
    }
    trace
}

/// Empirical `(mean, variance, fraction below mu)` of `n` unclamped draws
/// from the vocoder's Gaussian sampler at `(mu, s)`.
pub fn gaussian_moment_oracle(mu: f64, s: f64, n: usize, seed: u64) -> (f64, f64, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..n).map(|_| crate::vocoder::sample_gaussian_unclamped(mu, s, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let below = draws.iter().filter(|&&x| x < mu).count() as f64 / n as f64;
    (mean, var, below)
}

/// Direct Gaussian negative log-likelihood, `s` clamped to `[-9, 4]`.
pub fn gaussian_nll_oracle(mu: f64, s: f64, x: f64) -> f64 {
    let s = s.clamp(-9.0, 4.0);
    0.5 * ((2.0 * PI).ln() + 2.0 * s + (x - mu).powi(2) / (2.0 * s).exp())
}

/// One convolution layer in plain vectors; `divisor` is the spectral-norm scale
/// (1 for unnormalized layers).
#[derive(Debug, Clone)]
pub struct NaiveConv {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub divisor: f64,
}

impl NaiveConv {
    fn apply(&self, x: &[f64], frames: usize) -> Vec<f64> {
        let w: Vec<f64> = self.weight.iter().map(|v| v / self.divisor).collect();
        naive_conv1d(x, self.c_in, frames, &w, &self.bias, self.c_out, self.kernel)
    }
}

/// Loop-level model of the residual convolutional stack used by both the
/// generators and the discriminators (without pooling).
#[derive(Debug, Clone)]
pub struct NaiveResNet {
    pub input: NaiveConv,
    pub blocks: Vec<(NaiveConv, NaiveConv)>,
    pub output: NaiveConv,
    pub slope: f64,
}

impl NaiveResNet {
    /// `x: [channels][frames]` for one example.
    pub fn forward(&self, x: &[f64], frames: usize) -> Vec<f64> {
        let lrelu = |v: f64| if v >= 0.0 { v } else { self.slope * v };
        let mut h: Vec<f64> = self.input.apply(x, frames).into_iter().map(lrelu).collect();
        for (c1, c2) in &self.blocks {
            let a: Vec<f64> = c1.apply(&h, frames).into_iter().map(lrelu).collect();
            let b = c2.apply(&a, frames);
            for (hv, bv) in h.iter_mut().zip(b) {
                *hv += bv;
            }
        }
        self.output.apply(&h, frames)
    }

    /// Discriminator score: output channel 0 averaged over frames.
    pub fn score(&self, x: &[f64], frames: usize) -> f64 {
        let out = self.forward(x, frames);
        out[..frames].iter().sum::<f64>() / frames as f64
    }
}

fn trim(x: &[f64], channels: usize, frames: usize, edge: usize) -> Vec<f64> {
    let keep = frames - 2 * edge;
    let mut out = Vec::with_capacity(channels * keep);
    for c in 0..channels {
        out.extend_from_slice(&x[c * frames + edge..c * frames + edge + keep]);
    }
    out
}

fn mean_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Plain-loop model of the four converter networks (noise-free).
pub struct NaivePair {
    pub g_xy: NaiveResNet,
    pub g_yx: NaiveResNet,
    pub d_x: NaiveResNet,
    pub d_y: NaiveResNet,
    pub bins: usize,
    pub trim: usize,
}

/// The six generator-loss terms in the order
/// `[adv_x, adv_y, cycle_x, cycle_y, identity_x, identity_y]`, averaged over
/// the batch; each batch item is `[bins][frames]`.
pub fn generator_loss_oracle(pair: &NaivePair, xs: &[Vec<f64>], ys: &[Vec<f64>], frames: usize) -> [f64; 6] {
    let mut terms = [0.0; 6];
    let n = xs.len() as f64;
    let keep = frames - 2 * pair.trim;
    for (x, y) in xs.iter().zip(ys) {
        let fake_y = pair.g_xy.forward(x, frames);
        let fake_x = pair.g_yx.forward(y, frames);
        let dx_fake = pair.d_x.score(&trim(&fake_x, pair.bins, frames, pair.trim), keep);
        let dy_fake = pair.d_y.score(&trim(&fake_y, pair.bins, frames, pair.trim), keep);
        terms[0] += (-dx_fake).max(0.0) / n;
        terms[1] += (-dy_fake).max(0.0) / n;
        terms[2] += mean_abs(&pair.g_yx.forward(&fake_y, frames), x) / n;
        terms[3] += mean_abs(&pair.g_xy.forward(&fake_x, frames), y) / n;
        terms[4] += mean_abs(&pair.g_yx.forward(x, frames), x) / n;
        terms[5] += mean_abs(&pair.g_xy.forward(y, frames), y) / n;
    }
    terms
}

/// The four discriminator-loss terms
/// `[real_x, real_y, fake_x, fake_y]` for margin `m`.
pub fn discriminator_loss_oracle(
    pair: &NaivePair,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    frames: usize,
    m: f64,
) -> [f64; 4] {
    let mut terms = [0.0; 4];
    let n = xs.len() as f64;
    let keep = frames - 2 * pair.trim;
    for (x, y) in xs.iter().zip(ys) {
        let fake_y = pair.g_xy.forward(x, frames);
        let fake_x = pair.g_yx.forward(y, frames);
        terms[0] += (m - pair.d_x.score(&trim(x, pair.bins, frames, pair.trim), keep)).max(0.0) / n;
        terms[1] += (m - pair.d_y.score(&trim(y, pair.bins, frames, pair.trim), keep)).max(0.0) / n;
        terms[2] += (m + pair.d_x.score(&trim(&fake_x, pair.bins, frames, pair.trim), keep)).max(0.0) / n;
        terms[3] += (m + pair.d_y.score(&trim(&fake_y, pair.bins, frames, pair.trim), keep)).max(0.0) / n;
    }
    terms
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_of_zeros_and_dc() {
        assert!(dft_oracle(&[0.0; 254]).unwrap().iter().all(|&v| v == 0.0));
        let dc = dft_oracle(&[1.0; 254]).unwrap();
        let wsum: f64 = (0..254).map(oracle_window).sum();
        assert!((dc[0] - wsum).abs() < 1e-9);
        assert!(dft_oracle(&[0.0; 10]).is_err());
    }

    #[test]
    fn parseval_on_full_spectrum() {
        let frame: Vec<f64> = (0..254).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let spec = dft_oracle_full(&frame).unwrap();
        let freq_energy: f64 = spec.iter().map(|(r, i)| r * r + i * i).sum::<f64>() / 254.0;
        let time_energy = windowed_energy(&frame);
        assert!((freq_energy - time_energy).abs() <= 1e-6 * time_energy);
    }

    #[test]
    fn finite_differences_of_simple_functions() {
        let g = finite_difference_grad(|p| 0.5 * p[0] * p[0], &[3.0], 1e-3).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-6);
        for step in [1e-1, 1e-3, 0.5] {
            let g = finite_difference_grad(|p| 4.0 * p[0] - 2.0 * p[1] + 1.0, &[0.3, -8.0], step).unwrap();
            assert!((g[0] - 4.0).abs() < 1e-9 && (g[1] + 2.0).abs() < 1e-9);
        }
        assert!(matches!(
            finite_difference_grad(|p| if p[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], 1e-3),
            Err(Error::NonFiniteEvaluation(0))
        ));
    }

    #[test]
    fn singular_values_of_known_matrices() {
        assert!((singular_value_oracle(&[3.0, 0.0, 0.0, 1.0], 2, 2) - 3.0).abs() < 1e-8);
        // u = (2, 0, 0) scaled direction, v with norm 5: ‖u‖‖v‖ = 10
        let u = [0.0, 2.0, 0.0];
        let v = [3.0, 4.0];
        let w: Vec<f64> = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        assert!((singular_value_oracle(&w, 3, 2) - 10.0).abs() < 1e-8);
        let wt: Vec<f64> = (0..2).flat_map(|j| (0..3).map(move |i| (i, j))).map(|(i, j)| w[i * 2 + j]).collect();
        assert!((singular_value_oracle(&wt, 2, 3) - 10.0).abs() < 1e-8);
    }

    #[test]
    fn naive_conv_identity_kernel() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let w = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(naive_conv1d(&x, 2, 3, &w, &[0.0, 0.0], 2, 1), x.to_vec());
    }

    #[test]
    fn adam_oracle_first_step() {
        let trace = adam_recurrence_oracle(0.0, &[1.0], 0.1, 0.9, 0.999, 0.0);
        assert!((trace[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn report_formatting() {
        let r = ToleranceReport::compare("x", &[1.0, 2.0], &[1.0, 2.0000001], 1e-6, 0.0);
        assert!(r.pass);
        assert!(r.to_string().starts_with("PASS\tx\t"));
        let bad = ToleranceReport::compare("y", &[1.0], &[2.0], 1e-3, 1e-6);
        assert!(!bad.pass);
        assert!(!ToleranceReport::combine("z", &[r, bad]).pass);
    }
}
