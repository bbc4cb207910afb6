//! Stride-1 residual convolutional networks over `[batch, bins, frames]`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::{init, matrix_dims, Graph, NodeId, ParamId, ParamStore, PowerIterState, Tensor};
use crate::oracles::{NaiveConv, NaiveResNet};
use crate::{Error, Result, N_BINS};

use super::ConverterConfig;

/// Weight `[c_out, c_in, kernel]` and bias `[c_out]` of one convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvLayer {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight =
            store.add(format!("{name}.weight"), init::uniform_fan_in(rng, &[c_out, c_in, kernel], c_in * kernel))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[c_out]))?;
        Ok(Self { weight, bias })
    }

    fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    fn naive(&self, store: &ParamStore, divisor: f64) -> NaiveConv {
        let w = store.value(self.weight);
        let s = w.shape();
        NaiveConv {
            weight: w.data().to_vec(),
            bias: store.value(self.bias).data().to_vec(),
            c_out: s[0],
            c_in: s[1],
            kernel: s[2],
            divisor,
        }
    }
}

/// Layers shared by both network kinds: entry projection, residual blocks,
/// exit projection.
#[derive(Debug, Clone, PartialEq)]
struct ResStack {
    input: ConvLayer,
    blocks: Vec<[ConvLayer; 2]>,
    output: ConvLayer,
}

impl ResStack {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &ConverterConfig,
        n_blocks: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let c = cfg.channels;
        let input = ConvLayer::new(store, &format!("{prefix}.input"), N_BINS, c, cfg.edge_kernel, rng)?;
        let blocks = (0..n_blocks)
            .map(|i| {
                Ok([
                    ConvLayer::new(store, &format!("{prefix}.block{i}.conv1"), c, c, cfg.kernel, rng)?,
                    ConvLayer::new(store, &format!("{prefix}.block{i}.conv2"), c, c, cfg.kernel, rng)?,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let output = ConvLayer::new(store, &format!("{prefix}.output"), c, out_channels, cfg.edge_kernel, rng)?;
        Ok(Self { input, blocks, output })
    }

    fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        std::iter::once(&self.input).chain(self.blocks.iter().flatten()).chain(std::iter::once(&self.output))
    }

    fn params(&self) -> Vec<ParamId> {
        self.layers().flat_map(|l| l.params()).collect()
    }

    /// `lrelu(input(x))`, then `h + conv2(lrelu(conv1(h)))` per block, then `output(h)`.
    fn forward(g: &mut Graph, layers: &[(NodeId, NodeId)], x: NodeId, slope: f64) -> Result<NodeId> {
        let (first, rest) = layers.split_first().expect("at least entry and exit layers");
        let (last, blocks) = rest.split_last().expect("at least entry and exit layers");
        let h = g.conv1d(x, first.0, first.1)?;
        let mut h = g.leaky_relu(h, slope);
        for pair in blocks.chunks_exact(2) {
            let a = g.conv1d(h, pair[0].0, pair[0].1)?;
            let a = g.leaky_relu(a, slope);
            let a = g.conv1d(a, pair[1].0, pair[1].1)?;
            h = g.add(h, a)?;
        }
        g.conv1d(h, last.0, last.1)
    }
}

/// Spectrogram-to-spectrogram mapping: `bins -> channels -> ... -> bins`,
/// frame count preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    stack: ResStack,
    slope: f64,
}

/// A generator's parameters bound into one graph.
pub struct BoundGenerator {
    layers: Vec<(NodeId, NodeId)>,
    slope: f64,
}

impl BoundGenerator {
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        check_bins(g.value(x))?;
        ResStack::forward(g, &self.layers, x, self.slope)
    }
}

fn check_bins(x: &Tensor) -> Result<()> {
    let s = x.shape();
    if s.len() != 3 || s[1] != N_BINS {
        return Err(Error::BinCountMismatch { bins: s.get(1).copied().unwrap_or(0), expected: N_BINS });
    }
    if s[2] == 0 {
        return Err(Error::EmptyInput("generator"));
    }
    Ok(())
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &ConverterConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self { stack: ResStack::new(store, prefix, cfg, cfg.n_g, N_BINS, rng)?, slope: cfg.slope })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.stack.params()
    }

    pub fn n_blocks(&self) -> usize {
        self.stack.blocks.len()
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundGenerator {
        let layers = self.stack.layers().map(|l| (g.param(store, l.weight), g.param(store, l.bias))).collect();
        BoundGenerator { layers, slope: self.slope }
    }

    /// Graph-building forward pass over `[batch, bins, frames]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        self.bind(g, store).forward(g, x)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, store);
        let xn = g.constant(x.clone());
        let out = bound.forward(&mut g, xn)?;
        Ok(g.value(out).clone())
    }

    /// Overwrites the weights so the network maps nonnegative input to itself.
    /// Needs `channels >= bins`: entry and exit are identity embeddings and
    /// every residual branch is zeroed.
    pub fn set_identity(&self, store: &mut ParamStore) -> Result<()> {
        let c = store.value(self.stack.input.weight).shape()[0];
        if c < N_BINS {
            return Err(Error::InvalidConfig(format!("identity generator needs at least {N_BINS} channels, have {c}")));
        }
        for layer in self.stack.layers() {
            for id in layer.params() {
                store.get_mut(id).value.data_mut().fill(0.0);
            }
        }
        let (kin, kout) =
            (store.value(self.stack.input.weight).shape()[2], store.value(self.stack.output.weight).shape()[2]);
        let win = store.get_mut(self.stack.input.weight).value.data_mut();
        for b in 0..N_BINS {
            win[(b * N_BINS + b) * kin + kin / 2] = 1.0;
        }
        let wout = store.get_mut(self.stack.output.weight).value.data_mut();
        for b in 0..N_BINS {
            wout[(b * c + b) * kout + kout / 2] = 1.0;
        }
        Ok(())
    }

    /// Plain-vector copy for the loop-level oracle.
    pub fn to_naive(&self, store: &ParamStore) -> NaiveResNet {
        naive_stack(&self.stack, store, &[], self.slope)
    }
}

fn naive_stack(stack: &ResStack, store: &ParamStore, divisors: &[f64], slope: f64) -> NaiveResNet {
    let d = |i: usize| divisors.get(i).copied().unwrap_or(1.0);
    let n = stack.blocks.len();
    NaiveResNet {
        input: stack.input.naive(store, d(0)),
        blocks: stack
            .blocks
            .iter()
            .enumerate()
            .map(|(i, [a, b])| (a.naive(store, d(1 + 2 * i)), b.naive(store, d(2 + 2 * i))))
            .collect(),
        output: stack.output.naive(store, d(1 + 2 * n)),
        slope,
    }
}

/// Critic over trimmed spectrograms: every convolution is spectrally
/// normalized, Gaussian noise is added to the input, and the single output
/// channel is averaged over frames into one score per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    stack: ResStack,
    slope: f64,
    pub noise_sigma: f64,
    frames: usize,
    /// One power-iteration state per convolution, in layer order.
    pub power: Vec<PowerIterState>,
    /// Current divisor for each convolution (1 where normalization was skipped).
    pub sigmas: Vec<f64>,
}

pub struct BoundDiscriminator {
    layers: Vec<(NodeId, NodeId)>,
    slope: f64,
    noise_sigma: f64,
    frames: usize,
}

impl BoundDiscriminator {
    /// Scores `[batch, bins, frames]` into `[batch, 1]`. Noise is drawn from
    /// `rng` when given and `noise_sigma > 0`.
    pub fn forward<R: Rng + ?Sized>(&self, g: &mut Graph, x: NodeId, rng: Option<&mut R>) -> Result<NodeId> {
        check_bins(g.value(x))?;
        let frames = g.value(x).shape()[2];
        if frames != self.frames {
            return Err(Error::FrameCountMismatch { expected: self.frames, found: frames });
        }
        let x = match rng {
            Some(rng) if self.noise_sigma > 0.0 => {
                let shape = g.value(x).shape().to_vec();
                let n: usize = shape.iter().product();
                let noise: Vec<f64> = (0..n).map(|_| self.noise_sigma * rng.sample::<f64, _>(StandardNormal)).collect();
                let noise = g.constant(Tensor::new(shape, noise)?);
                g.add(x, noise)?
            }
            _ => x,
        };
        let out = ResStack::forward(g, &self.layers, x, self.slope)?;
        g.global_avg_pool(out)
    }
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &ConverterConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let stack = ResStack::new(store, prefix, cfg, cfg.n_d, 1, rng)?;
        let power: Vec<PowerIterState> =
            stack.layers().map(|l| PowerIterState::new(store.value(l.weight).shape()[0], rng)).collect();
        let sigmas = vec![1.0; power.len()];
        let mut d = Self {
            stack,
            slope: cfg.slope,
            noise_sigma: cfg.noise_sigma,
            frames: cfg.crop_frames - 2 * cfg.trim_frames,
            power,
            sigmas,
        };
        d.power_iterate(store, false);
        Ok(d)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.stack.params()
    }

    pub fn weight_ids(&self) -> Vec<ParamId> {
        self.stack.layers().map(|l| l.weight).collect()
    }

    pub fn n_blocks(&self) -> usize {
        self.stack.blocks.len()
    }

    /// Frames expected at the input.
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// One power-iteration step per convolution; refreshes every divisor.
    /// Returns the number of layers whose weights were numerically zero.
    pub fn power_iterate(&mut self, store: &ParamStore, round_to_f32: bool) -> usize {
        let mut skipped = 0;
        for ((layer, state), sigma) in self.stack.layers().zip(&mut self.power).zip(&mut self.sigmas) {
            let w = store.value(layer.weight);
            let (rows, cols) = matrix_dims(w.shape());
            match state.iterate(w.data(), rows, cols) {
                Some(s) => *sigma = s,
                None => {
                    *sigma = 1.0;
                    skipped += 1;
                }
            }
            if round_to_f32 {
                state.round_to_f32();
            }
        }
        skipped
    }

    /// Recomputes every divisor for the current weights, keeping `u` fixed.
    pub fn refresh_sigmas(&mut self, store: &ParamStore) {
        for ((layer, state), sigma) in self.stack.layers().zip(&self.power).zip(&mut self.sigmas) {
            let w = store.value(layer.weight);
            let (rows, cols) = matrix_dims(w.shape());
            *sigma = state.estimate(w.data(), rows, cols).unwrap_or(1.0);
        }
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundDiscriminator {
        let layers = self
            .stack
            .layers()
            .zip(&self.sigmas)
            .map(|(l, &sigma)| {
                let w = g.param(store, l.weight);
                let w = g.scale(w, 1.0 / sigma);
                (w, g.param(store, l.bias))
            })
            .collect();
        BoundDiscriminator { layers, slope: self.slope, noise_sigma: self.noise_sigma, frames: self.frames }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        rng: Option<&mut R>,
    ) -> Result<NodeId> {
        self.bind(g, store).forward(g, x, rng)
    }

    /// Scores for `[batch, bins, frames]` without gradient bookkeeping.
    pub fn score<R: Rng + ?Sized>(&self, store: &ParamStore, x: &Tensor, rng: Option<&mut R>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let out = self.forward(&mut g, store, xn, rng)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn to_naive(&self, store: &ParamStore) -> NaiveResNet {
        naive_stack(&self.stack, store, &self.sigmas, self.slope)
    }
}
