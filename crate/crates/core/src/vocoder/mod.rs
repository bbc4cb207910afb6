//! Autoregressive vocoder: eight spectrogram frames condition the 128 samples
//! of the centre frame through a four-layer fully connected upsampler; a GRU
//! consumes each conditioning vector together with the previous sample, and a
//! two-layer head predicts the mean and log-scale of a Gaussian over the next
//! sample.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dsp::{frame_count, Spectrogram, Waveform, MAX_SAMPLE};
use crate::nn::kernels::{self, GruDims};
use crate::nn::{init, Graph, NodeId, ParamId, ParamStore, Tensor, LOG_SCALE_MAX, LOG_SCALE_MIN};
use crate::{Error, Result, HOP_LEN, N_BINS};

/// Frames in a conditioning window.
pub const WINDOW_FRAMES: usize = 8;
/// Window frames before the centre frame (`t-3 ..= t+4`).
pub const FRAMES_BEFORE: usize = 3;
/// Conditioning features per output sample.
pub const COND_DIM: usize = 64;
/// Samples generated per spectrogram frame.
pub const SAMPLES_PER_FRAME: usize = HOP_LEN;
pub const UPSAMPLE_IN: usize = N_BINS * WINDOW_FRAMES;
pub const UPSAMPLE_OUT: usize = COND_DIM * SAMPLES_PER_FRAME;

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderConfig {
    /// GRU state size.
    pub hidden: usize,
    /// Widths of the three hidden upsampler layers (`1024 -> w0 -> w1 -> w2 -> 8192`).
    pub upsample_widths: [usize; 3],
    /// Width of the hidden head layer.
    pub head_hidden: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self { hidden: 256, upsample_widths: [2048, 4096, 8192], head_hidden: 256 }
    }
}

impl VocoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.head_hidden == 0 || self.upsample_widths.contains(&0) {
            return Err(Error::InvalidConfig("vocoder widths must be positive".into()));
        }
        Ok(())
    }
}

/// Predicted density of one sample. `s` is the log standard deviation,
/// always within `[LOG_SCALE_MIN, LOG_SCALE_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOut {
    pub mu: f64,
    pub s: f64,
}

impl GaussianOut {
    pub fn new(mu: f64, s: f64) -> Self {
        Self { mu, s: s.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX) }
    }

    pub fn sigma(&self) -> f64 {
        self.s.exp()
    }
}

/// `½(ln 2π + 2s + (x − μ)² / e^{2s})`.
pub fn gaussian_nll(out: GaussianOut, x: f64) -> f64 {
    crate::nn::gaussian_nll_value(out.mu, out.s, x)
}

/// `μ + e^s z` for standard normal `z`, without clamping.
pub fn sample_gaussian_unclamped<R: Rng + ?Sized>(mu: f64, s: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mu + s.exp() * z
}

/// A draw from `out`, clamped into the PCM range.
pub fn sample_gaussian<R: Rng + ?Sized>(out: GaussianOut, rng: &mut R) -> f64 {
    sample_gaussian_unclamped(out.mu, out.s, rng).clamp(-1.0, MAX_SAMPLE)
}

/// Frames `t-3 ..= t+4` of a spectrogram, zero outside its range, flattened
/// frame-major into 1024 values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningWindow {
    values: Vec<f64>,
}

impl ConditioningWindow {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != UPSAMPLE_IN {
            return Err(Error::ShapeMismatch {
                op: "conditioning window",
                detail: format!("{} values, expected {UPSAMPLE_IN}", values.len()),
            });
        }
        Ok(Self { values })
    }

    pub fn centered(spec: &Spectrogram, t: usize) -> Self {
        let mut values = vec![0.0; UPSAMPLE_IN];
        for k in 0..WINDOW_FRAMES {
            let src = t as isize + k as isize - FRAMES_BEFORE as isize;
            if src >= 0 && (src as usize) < spec.frames() {
                values[k * N_BINS..(k + 1) * N_BINS].copy_from_slice(spec.frame(src as usize));
            }
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One teacher-forcing unit: a window, the sample preceding the centre frame,
/// and the centre frame's 128 ground-truth samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub window: ConditioningWindow,
    pub prev_sample: f64,
    pub target: Vec<f64>,
}

/// Splits an utterance into per-frame segments. Frame `t` owns samples
/// `[128t, 128t + 128)`; the spectrogram must come from the same waveform.
pub fn segments(spec: &Spectrogram, wave: &Waveform) -> Result<Vec<Segment>> {
    let samples = wave.samples();
    if frame_count(samples.len()) != Some(spec.frames()) {
        return Err(Error::Misaligned { frames: spec.frames(), samples: samples.len() });
    }
    Ok((0..spec.frames())
        .map(|t| {
            let start = t * SAMPLES_PER_FRAME;
            Segment {
                window: ConditioningWindow::centered(spec, t),
                prev_sample: if start == 0 { 0.0 } else { samples[start - 1] },
                target: samples[start..start + SAMPLES_PER_FRAME].to_vec(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.add(format!("{name}.weight"), init::uniform_fan_in(rng, &[n_out, n_in], n_in))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[n_out]))?,
        })
    }

    fn infer(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let w = store.value(self.weight);
        let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
        kernels::linear_forward(x, w.data(), store.value(self.bias).data(), x.len() / n_in, n_in, n_out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderNet {
    pub config: VocoderConfig,
    upsampler: [Dense; 4],
    w_ih: ParamId,
    w_hh: ParamId,
    b_ih: ParamId,
    b_hh: ParamId,
    head: [Dense; 2],
}

/// A vocoder's parameters bound into one graph.
pub struct BoundVocoder {
    upsampler: Vec<(NodeId, NodeId)>,
    gru: [NodeId; 4],
    head: [(NodeId, NodeId); 2],
}

impl BoundVocoder {
    /// `[batch, 1024] -> [batch, 8192]`, ReLU after the first three layers.
    pub fn upsample(&self, g: &mut Graph, windows: NodeId) -> Result<NodeId> {
        let mut h = windows;
        for (i, (w, b)) in self.upsampler.iter().enumerate() {
            h = g.linear(h, *w, *b)?;
            if i < 3 {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// One recurrent step: returns `([batch, 2] of (μ, s_raw), new hidden)`.
    pub fn step(&self, g: &mut Graph, cond: NodeId, prev: NodeId, hidden: NodeId) -> Result<(NodeId, NodeId)> {
        let x = g.concat_cols(cond, prev)?;
        let [w_ih, w_hh, b_ih, b_hh] = self.gru;
        let h = g.gru_cell(x, hidden, w_ih, w_hh, b_ih, b_hh)?;
        let a = g.linear(h, self.head[0].0, self.head[0].1)?;
        let a = g.relu(a);
        let out = g.linear(a, self.head[1].0, self.head[1].1)?;
        Ok((out, h))
    }
}

impl VocoderNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: VocoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let [w0, w1, w2] = config.upsample_widths;
        let upsampler = [
            Dense::new(store, "upsample.0", UPSAMPLE_IN, w0, rng)?,
            Dense::new(store, "upsample.1", w0, w1, rng)?,
            Dense::new(store, "upsample.2", w1, w2, rng)?,
            Dense::new(store, "upsample.3", w2, UPSAMPLE_OUT, rng)?,
        ];
        let h = config.hidden;
        let gru_in = COND_DIM + 1;
        let w_ih = store.add("gru.w_ih", init::uniform_fan_in(rng, &[3 * h, gru_in], gru_in))?;
        let w_hh = store.add("gru.w_hh", init::uniform_fan_in(rng, &[3 * h, h], h))?;
        let b_ih = store.add("gru.b_ih", Tensor::zeros(&[3 * h]))?;
        let b_hh = store.add("gru.b_hh", Tensor::zeros(&[3 * h]))?;
        let head = [
            Dense::new(store, "head.0", h, config.head_hidden, rng)?,
            Dense::new(store, "head.1", config.head_hidden, 2, rng)?,
        ];
        Ok(Self { config, upsampler, w_ih, w_hh, b_ih, b_hh, head })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.upsampler.iter().flat_map(|d| [d.weight, d.bias]).collect();
        p.extend([self.w_ih, self.w_hh, self.b_ih, self.b_hh]);
        p.extend(self.head.iter().flat_map(|d| [d.weight, d.bias]));
        p
    }

    /// Id of the output-head bias, `[μ, s]`.
    pub fn head_bias(&self) -> ParamId {
        self.head[1].bias
    }

    /// Id of the GRU input-to-hidden bias, stacked `(reset, update, candidate)`.
    pub fn gru_input_bias(&self) -> ParamId {
        self.b_ih
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundVocoder {
        let mut p = |id| g.param(store, id);
        let upsampler = self.upsampler.iter().map(|d| (p(d.weight), p(d.bias))).collect();
        let gru = [p(self.w_ih), p(self.w_hh), p(self.b_ih), p(self.b_hh)];
        let head = [(p(self.head[0].weight), p(self.head[0].bias)), (p(self.head[1].weight), p(self.head[1].bias))];
        BoundVocoder { upsampler, gru, head }
    }

    /// The 128 conditioning vectors for one window; sample `i` gets
    /// `[64i, 64i + 64)` of the upsampler output.
    pub fn upsample_condition(&self, store: &ParamStore, win: &ConditioningWindow) -> Vec<Vec<f64>> {
        let mut h = win.values().to_vec();
        for (i, d) in self.upsampler.iter().enumerate() {
            h = d.infer(store, &h);
            if i < 3 {
                h.iter_mut().for_each(|v| *v = kernels::relu(*v));
            }
        }
        h.chunks_exact(COND_DIM).map(<[f64]>::to_vec).collect()
    }

    /// One autoregressive step without gradient bookkeeping.
    pub fn step(
        &self,
        store: &ParamStore,
        cond: &[f64],
        prev_sample: f64,
        hidden: &[f64],
    ) -> Result<(GaussianOut, Vec<f64>)> {
        if cond.len() != COND_DIM || hidden.len() != self.config.hidden {
            return Err(Error::ShapeMismatch {
                op: "vocoder_step",
                detail: format!("cond {}, hidden {}", cond.len(), hidden.len()),
            });
        }
        let mut x = Vec::with_capacity(COND_DIM + 1);
        x.extend_from_slice(cond);
        x.push(prev_sample);
        let d = GruDims { batch: 1, input: COND_DIM + 1, hidden: self.config.hidden };
        let (h, _) = kernels::gru_forward(
            &x,
            hidden,
            store.value(self.w_ih).data(),
            store.value(self.w_hh).data(),
            store.value(self.b_ih).data(),
            store.value(self.b_hh).data(),
            &d,
        );
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(0));
        }
        let mut a = self.head[0].infer(store, &h);
        a.iter_mut().for_each(|v| *v = kernels::relu(*v));
        let out = self.head[1].infer(store, &a);
        Ok((GaussianOut::new(out[0], out[1]), h))
    }
}

/// Mean negative log-likelihood of a batch of segments under teacher forcing.
/// Each segment starts from a zero hidden state; returns the graph and the
/// loss node.
pub fn teacher_forced_graph(net: &VocoderNet, store: &ParamStore, batch: &[&Segment]) -> Result<(Graph, NodeId)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("vocoder batch"));
    }
    if let Some(bad) = batch.iter().find(|s| s.target.len() != SAMPLES_PER_FRAME) {
        return Err(Error::Misaligned { frames: 1, samples: bad.target.len() });
    }
    let b = batch.len();
    let mut g = Graph::new();
    let bound = net.bind(&mut g, store);
    let windows: Vec<f64> = batch.iter().flat_map(|s| s.window.values().iter().copied()).collect();
    let windows = g.constant(Tensor::new(vec![b, UPSAMPLE_IN], windows)?);
    let cond = bound.upsample(&mut g, windows)?;
    let mut hidden = g.constant(Tensor::zeros(&[b, net.config.hidden]));
    let mut terms = Vec::with_capacity(SAMPLES_PER_FRAME);
    let weight = 1.0 / SAMPLES_PER_FRAME as f64;
    for i in 0..SAMPLES_PER_FRAME {
        let c = g.slice_cols(cond, i * COND_DIM, COND_DIM)?;
        let prev: Vec<f64> = batch.iter().map(|s| if i == 0 { s.prev_sample } else { s.target[i - 1] }).collect();
        let prev = g.constant(Tensor::new(vec![b, 1], prev)?);
        let (out, h) = bound.step(&mut g, c, prev, hidden)?;
        hidden = h;
        let nll = g.gaussian_nll(out, batch.iter().map(|s| s.target[i]).collect())?;
        terms.push((nll, weight));
    }
    let loss = g.weighted_sum(terms)?;
    Ok((g, loss))
}

/// Mean teacher-forced loss over every sample of an utterance.
pub fn teacher_forced_nll(net: &VocoderNet, store: &ParamStore, spec: &Spectrogram, wave: &Waveform) -> Result<f64> {
    let segs = segments(spec, wave)?;
    let refs: Vec<&Segment> = segs.iter().collect();
    let (g, loss) = teacher_forced_graph(net, store, &refs)?;
    Ok(g.value(loss).item())
}

/// Recurrent state carried between frames during synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthState {
    pub hidden: Vec<f64>,
    pub prev_sample: f64,
    /// Samples generated so far.
    pub position: usize,
}

impl SynthState {
    pub fn new(net: &VocoderNet) -> Self {
        Self { hidden: vec![0.0; net.config.hidden], prev_sample: 0.0, position: 0 }
    }
}

/// Generates the 128 samples of frame `t`, feeding each sampled value back.
pub fn synthesize_frame<R: Rng + ?Sized>(
    net: &VocoderNet,
    store: &ParamStore,
    spec: &Spectrogram,
    t: usize,
    state: &mut SynthState,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let conds = net.upsample_condition(store, &ConditioningWindow::centered(spec, t));
    let mut out = Vec::with_capacity(SAMPLES_PER_FRAME);
    for cond in &conds {
        let (g, h) = net.step(store, cond, state.prev_sample, &state.hidden).map_err(|e| match e {
            Error::NonFiniteState(_) => Error::NonFiniteState(state.position),
            other => other,
        })?;
        if !(g.mu.is_finite() && g.s.is_finite()) {
            return Err(Error::NonFiniteState(state.position));
        }
        let x = sample_gaussian(g, rng);
        out.push(x);
        state.hidden = h;
        state.prev_sample = x;
        state.position += 1;
    }
    Ok(out)
}

/// Autoregressive synthesis of `frames × 128` samples, hidden state carried
/// across frames.
pub fn synthesize<R: Rng + ?Sized>(
    net: &VocoderNet,
    store: &ParamStore,
    spec: &Spectrogram,
    rng: &mut R,
) -> Result<Waveform> {
    if spec.frames() == 0 {
        return Err(Error::EmptyInput("synthesize"));
    }
    let mut state = SynthState::new(net);
    let mut samples = Vec::with_capacity(spec.frames() * SAMPLES_PER_FRAME);
    for t in 0..spec.frames() {
        samples.extend(synthesize_frame(net, store, spec, t, &mut state, rng)?);
    }
    Waveform::new(samples)
}
