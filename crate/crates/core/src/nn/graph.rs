//! Tape-based reverse-mode differentiation over the operation set the two
//! networks use. Nodes are appended in evaluation order, so a node may only
//! read nodes created before it; [`Graph::backward`] re-checks that order.

use super::kernels::{self, ConvDims, GruCache, GruDims};
use super::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Input,
    Param(ParamId),
    Conv1d { input: NodeId, weight: NodeId, bias: NodeId, dims: ConvDims },
    Linear { input: NodeId, weight: NodeId, bias: NodeId },
    LeakyRelu { input: NodeId, slope: f64 },
    Relu { input: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { input: NodeId, factor: f64 },
    GlobalAvgPool { input: NodeId },
    Gru { x: NodeId, h: NodeId, w_ih: NodeId, w_hh: NodeId, b_ih: NodeId, b_hh: NodeId, cache: Box<GruCache> },
    SliceCols { input: NodeId, start: usize },
    ConcatCols { a: NodeId, b: NodeId },
    TrimFrames { input: NodeId, start: usize },
    Sum { input: NodeId },
    Mean { input: NodeId },
    MeanAbsDiff { a: NodeId, b: NodeId },
    Hinge { input: NodeId, margin: f64, sign: f64 },
    GaussianNll { params: NodeId, target: Vec<f64> },
    WeightedSum { terms: Vec<(NodeId, f64)> },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Constant | Input | Param(_) => vec![],
            Conv1d { input, weight, bias, .. } | Linear { input, weight, bias } => vec![*input, *weight, *bias],
            LeakyRelu { input, .. }
            | Relu { input }
            | Scale { input, .. }
            | GlobalAvgPool { input }
            | SliceCols { input, .. }
            | TrimFrames { input, .. }
            | Sum { input }
            | Mean { input }
            | Hinge { input, .. } => vec![*input],
            Add { a, b } | ConcatCols { a, b } | MeanAbsDiff { a, b } => vec![*a, *b],
            Gru { x, h, w_ih, w_hh, b_ih, b_hh, .. } => vec![*x, *h, *w_ih, *w_hh, *b_ih, *b_hh],
            GaussianNll { params, .. } => vec![*params],
            WeightedSum { terms } => terms.iter().map(|(n, _)| *n).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Lower and upper clamp applied to the Gaussian log-scale `s`.
pub const LOG_SCALE_MIN: f64 = -9.0;
pub const LOG_SCALE_MAX: f64 = 4.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Gradients of every node with respect to one scalar loss.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.grads.get(node.0).and_then(|g| g.as_deref())
    }
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Input | Op::Param(_) => true,
            other => other.inputs().iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// A leaf whose gradient is reported by [`backward_nodes`](Self::backward_nodes).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// Stride-1 convolution of `[batch, c_in, frames]` by `[c_out, c_in, kernel]`.
    pub fn conv1d(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        if xs.len() != 3 || ws.len() != 3 || bs.len() != 1 {
            return Err(mismatch("conv1d", format!("input {xs:?}, weight {ws:?}, bias {bs:?}")));
        }
        if xs[1] != ws[1] || bs[0] != ws[0] {
            return Err(mismatch("conv1d", format!("channel mismatch: input {xs:?}, weight {ws:?}, bias {bs:?}")));
        }
        if ws[2] % 2 == 0 {
            return Err(mismatch("conv1d", format!("kernel {} must be odd", ws[2])));
        }
        let dims = ConvDims { batch: xs[0], c_in: xs[1], c_out: ws[0], frames: xs[2], kernel: ws[2] };
        let out = kernels::conv1d_forward(self.data(input), self.data(weight), self.data(bias), &dims);
        let value = Tensor::new(vec![dims.batch, dims.c_out, dims.frames], out)?;
        Ok(self.push(value, Op::Conv1d { input, weight, bias, dims }))
    }

    /// `[batch, n_in] · [n_out, n_in]ᵀ + bias`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[1] || bs[0] != ws[0] {
            return Err(mismatch("linear", format!("input {xs:?}, weight {ws:?}, bias {bs:?}")));
        }
        let (batch, n_in, n_out) = (xs[0], xs[1], ws[0]);
        let y = kernels::linear_forward(self.data(input), self.data(weight), self.data(bias), batch, n_in, n_out);
        let value = Tensor::new(vec![batch, n_out], y)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }))
    }

    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> NodeId {
        let x = &self.nodes[input.0].value;
        let data = x.data().iter().map(|&v| if v >= 0.0 { v } else { slope * v }).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::LeakyRelu { input, slope })
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0].value;
        let value =
            Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| kernels::relu(v)).collect()).expect("same shape");
        self.push(value, Op::Relu { input })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("add", format!("{:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let mut value = self.nodes[a.0].value.clone();
        value.add_assign(self.data(b));
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Multiplication by a constant; no gradient flows into `factor`.
    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let x = &self.nodes[input.0].value;
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v * factor).collect()).expect("same shape");
        self.push(value, Op::Scale { input, factor })
    }

    /// Mean over frames: `[batch, channels, frames] -> [batch, channels]`.
    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 {
            return Err(mismatch("global_avg_pool", format!("expected 3 dims, got {s:?}")));
        }
        if s[2] == 0 {
            return Err(Error::EmptyInput("global_avg_pool"));
        }
        let t = s[2];
        let data = self.data(input).chunks_exact(t).map(|row| row.iter().sum::<f64>() / t as f64).collect();
        let value = Tensor::new(vec![s[0], s[1]], data)?;
        Ok(self.push(value, Op::GlobalAvgPool { input }))
    }

    /// GRU cell over `x: [batch, input]`, `h: [batch, hidden]` with stacked
    /// `(reset, update, candidate)` weights `w_ih: [3·hidden, input]`,
    /// `w_hh: [3·hidden, hidden]`.
    pub fn gru_cell(
        &mut self,
        x: NodeId,
        h: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        b_ih: NodeId,
        b_hh: NodeId,
    ) -> Result<NodeId> {
        let (xs, hs) = (self.shape(x), self.shape(h));
        let (wi, wh, bi, bh) = (self.shape(w_ih), self.shape(w_hh), self.shape(b_ih), self.shape(b_hh));
        let ok = xs.len() == 2
            && hs.len() == 2
            && xs[0] == hs[0]
            && wi == [3 * hs[1], xs[1]]
            && wh == [3 * hs[1], hs[1]]
            && bi == [3 * hs[1]]
            && bh == [3 * hs[1]];
        if !ok {
            return Err(mismatch(
                "gru_cell",
                format!("x {xs:?}, h {hs:?}, w_ih {wi:?}, w_hh {wh:?}, b_ih {bi:?}, b_hh {bh:?}"),
            ));
        }
        let d = GruDims { batch: xs[0], input: xs[1], hidden: hs[1] };
        let (out, cache) = kernels::gru_forward(
            self.data(x),
            self.data(h),
            self.data(w_ih),
            self.data(w_hh),
            self.data(b_ih),
            self.data(b_hh),
            &d,
        );
        let value = Tensor::new(vec![d.batch, d.hidden], out)?;
        Ok(self.push(value, Op::Gru { x, h, w_ih, w_hh, b_ih, b_hh, cache: Box::new(cache) }))
    }

    /// Columns `start..start + len` of a `[batch, n]` node.
    pub fn slice_cols(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 || start + len > s[1] {
            return Err(mismatch("slice_cols", format!("{start}..{} of {s:?}", start + len)));
        }
        let data = self.data(input).chunks_exact(s[1]).flat_map(|r| r[start..start + len].iter().copied()).collect();
        let value = Tensor::new(vec![s[0], len], data)?;
        Ok(self.push(value, Op::SliceCols { input, start }))
    }

    /// `[batch, n] ++ [batch, m] -> [batch, n + m]`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(mismatch("concat_cols", format!("{sa:?} ++ {sb:?}")));
        }
        let mut data = Vec::with_capacity(sa[0] * (sa[1] + sb[1]));
        for (ra, rb) in self.data(a).chunks_exact(sa[1].max(1)).zip(self.data(b).chunks_exact(sb[1].max(1))) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let value = Tensor::new(vec![sa[0], sa[1] + sb[1]], data)?;
        Ok(self.push(value, Op::ConcatCols { a, b }))
    }

    /// Frames `start..start + len` of a `[batch, channels, frames]` node.
    pub fn trim_frames(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 || start + len > s[2] {
            return Err(mismatch("trim_frames", format!("{start}..{} of {s:?}", start + len)));
        }
        let data = self.data(input).chunks_exact(s[2]).flat_map(|r| r[start..start + len].iter().copied()).collect();
        let value = Tensor::new(vec![s[0], s[1], len], data)?;
        Ok(self.push(value, Op::TrimFrames { input, start }))
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let v = self.data(input).iter().sum();
        self.push(Tensor::scalar(v), Op::Sum { input })
    }

    pub fn mean(&mut self, input: NodeId) -> Result<NodeId> {
        let d = self.data(input);
        if d.is_empty() {
            return Err(Error::EmptyInput("mean"));
        }
        let v = d.iter().sum::<f64>() / d.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::Mean { input }))
    }

    /// Mean absolute difference over all elements.
    pub fn mean_abs_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("mean_abs_diff", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let (da, db) = (self.data(a), self.data(b));
        if da.is_empty() {
            return Err(Error::EmptyInput("mean_abs_diff"));
        }
        let v = da.iter().zip(db).map(|(x, y)| (x - y).abs()).sum::<f64>() / da.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::MeanAbsDiff { a, b }))
    }

    /// `mean(max(0, margin + sign · x))` over all elements.
    pub fn hinge(&mut self, input: NodeId, margin: f64, sign: f64) -> Result<NodeId> {
        let d = self.data(input);
        if d.is_empty() {
            return Err(Error::EmptyInput("hinge"));
        }
        let v = d.iter().map(|x| kernels::relu(margin + sign * x)).sum::<f64>() / d.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::Hinge { input, margin, sign }))
    }

    /// Mean Gaussian negative log-likelihood of `target` under `[batch, 2]`
    /// rows of `(mu, s)`, with `s` clamped to `[LOG_SCALE_MIN, LOG_SCALE_MAX]`:
    /// `½(ln 2π + 2s + (x − mu)² e^{−2s})`.
    pub fn gaussian_nll(&mut self, params: NodeId, target: Vec<f64>) -> Result<NodeId> {
        let s = self.shape(params);
        if s.len() != 2 || s[1] != 2 || s[0] != target.len() {
            return Err(mismatch("gaussian_nll", format!("params {s:?}, {} targets", target.len())));
        }
        if target.is_empty() {
            return Err(Error::EmptyInput("gaussian_nll"));
        }
        let v = self
            .data(params)
            .chunks_exact(2)
            .zip(&target)
            .map(|(p, &x)| gaussian_nll_value(p[0], p[1], x))
            .sum::<f64>()
            / target.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::GaussianNll { params, target }))
    }

    /// `Σ weight · term` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, f64)>) -> Result<NodeId> {
        if terms.is_empty() {
            return Err(Error::EmptyInput("weighted_sum"));
        }
        if let Some((n, _)) = terms.iter().find(|(n, _)| self.nodes[n.0].value.len() != 1) {
            return Err(Error::NonScalarLoss(self.shape(*n).to_vec()));
        }
        let v = terms.iter().map(|(n, w)| w * self.nodes[n.0].value.item()).sum();
        Ok(self.push(Tensor::scalar(v), Op::WeightedSum { terms }))
    }

    /// Reverse sweep from `loss`; gradients for every node that needs one.
    pub fn backward_nodes(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let Some(bad) = node.op.inputs().into_iter().find(|inp| inp.0 >= i) {
                return Err(Error::GraphCycle { node: i, input: bad.0 });
            }
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Reverse sweep from `loss`, accumulating into the store's parameter gradients.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward_nodes(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.get(NodeId(i))) {
                store.accumulate_grad(*id, g);
            }
        }
        Ok(())
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |id: NodeId, delta: &[f64]| {
            if !self.wants(id) {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => {
                    for (a, b) in existing.iter_mut().zip(delta) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(delta.to_vec()),
            }
        };
        match &node.op {
            Op::Constant | Op::Input | Op::Param(_) => {}
            Op::Conv1d { input, weight, bias, dims } => {
                let (dx, dw, db) =
                    kernels::conv1d_backward(self.data(*input), self.data(*weight), g, dims, self.wants(*input));
                if let Some(dx) = dx {
                    acc(*input, &dx);
                }
                acc(*weight, &dw);
                acc(*bias, &db);
            }
            Op::Linear { input, weight, bias } => {
                let ws = self.shape(*weight);
                let (n_out, n_in) = (ws[0], ws[1]);
                let batch = self.shape(*input)[0];
                let mut dw = vec![0.0; n_out * n_in];
                let mut db = vec![0.0; n_out];
                let dx = kernels::linear_backward(
                    self.data(*input),
                    self.data(*weight),
                    g,
                    batch,
                    n_in,
                    n_out,
                    &mut dw,
                    &mut db,
                    self.wants(*input),
                );
                if let Some(dx) = dx {
                    acc(*input, &dx);
                }
                acc(*weight, &dw);
                acc(*bias, &db);
            }
            Op::LeakyRelu { input, slope } => {
                let d: Vec<f64> =
                    self.data(*input).iter().zip(g).map(|(&x, &g)| if x >= 0.0 { g } else { slope * g }).collect();
                acc(*input, &d);
            }
            Op::Relu { input } => {
                let d: Vec<f64> =
                    self.data(*input).iter().zip(g).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect();
                acc(*input, &d);
            }
            Op::Add { a, b } => {
                acc(*a, g);
                acc(*b, g);
            }
            Op::Scale { input, factor } => {
                let d: Vec<f64> = g.iter().map(|v| v * factor).collect();
                acc(*input, &d);
            }
            Op::GlobalAvgPool { input } => {
                let t = self.shape(*input)[2];
                let d: Vec<f64> = g.iter().flat_map(|&v| std::iter::repeat_n(v / t as f64, t)).collect();
                acc(*input, &d);
            }
            Op::Gru { x, h, w_ih, w_hh, b_ih, b_hh, cache } => {
                let (xs, hs) = (self.shape(*x), self.shape(*h));
                let d = GruDims { batch: xs[0], input: xs[1], hidden: hs[1] };
                let mut dwi = vec![0.0; self.nodes[w_ih.0].value.len()];
                let mut dwh = vec![0.0; self.nodes[w_hh.0].value.len()];
                let mut dbi = vec![0.0; 3 * d.hidden];
                let mut dbh = vec![0.0; 3 * d.hidden];
                let out = kernels::gru_backward(
                    self.data(*x),
                    self.data(*h),
                    self.data(*w_ih),
                    self.data(*w_hh),
                    cache,
                    g,
                    &d,
                    (&mut dwi, &mut dwh, &mut dbi, &mut dbh),
                    (self.wants(*x), self.wants(*h)),
                );
                if let Some(dx) = out.input {
                    acc(*x, &dx);
                }
                if let Some(dh) = out.hidden {
                    acc(*h, &dh);
                }
                acc(*w_ih, &dwi);
                acc(*w_hh, &dwh);
                acc(*b_ih, &dbi);
                acc(*b_hh, &dbh);
            }
            Op::SliceCols { input, start } => {
                let s = self.shape(*input);
                let len = node.value.shape()[1];
                let mut d = vec![0.0; s[0] * s[1]];
                for (row, grow) in d.chunks_exact_mut(s[1]).zip(g.chunks_exact(len.max(1))) {
                    row[*start..*start + len].copy_from_slice(grow);
                }
                acc(*input, &d);
            }
            Op::ConcatCols { a, b } => {
                let (na, nb) = (self.shape(*a)[1], self.shape(*b)[1]);
                let mut da = Vec::with_capacity(g.len());
                let mut db = Vec::with_capacity(g.len());
                for row in g.chunks_exact(na + nb) {
                    da.extend_from_slice(&row[..na]);
                    db.extend_from_slice(&row[na..]);
                }
                acc(*a, &da);
                acc(*b, &db);
            }
            Op::TrimFrames { input, start } => {
                let s = self.shape(*input);
                let len = node.value.shape()[2];
                let mut d = vec![0.0; s.iter().product()];
                for (row, grow) in d.chunks_exact_mut(s[2]).zip(g.chunks_exact(len.max(1))) {
                    row[*start..*start + len].copy_from_slice(grow);
                }
                acc(*input, &d);
            }
            Op::Sum { input } => {
                let d = vec![g[0]; self.nodes[input.0].value.len()];
                acc(*input, &d);
            }
            Op::Mean { input } => {
                let n = self.nodes[input.0].value.len();
                acc(*input, &vec![g[0] / n as f64; n]);
            }
            Op::MeanAbsDiff { a, b } => {
                let n = self.nodes[a.0].value.len() as f64;
                let da: Vec<f64> =
                    self.data(*a).iter().zip(self.data(*b)).map(|(x, y)| g[0] * sign(x - y) / n).collect();
                let db: Vec<f64> = da.iter().map(|v| -v).collect();
                acc(*a, &da);
                acc(*b, &db);
            }
            Op::Hinge { input, margin, sign } => {
                let x = self.data(*input);
                let n = x.len() as f64;
                let d: Vec<f64> =
                    x.iter().map(|v| if margin + sign * v > 0.0 { g[0] * sign / n } else { 0.0 }).collect();
                acc(*input, &d);
            }
            Op::GaussianNll { params, target } => {
                let n = target.len() as f64;
                let mut d = vec![0.0; 2 * target.len()];
                for ((p, dp), &x) in self.data(*params).chunks_exact(2).zip(d.chunks_exact_mut(2)).zip(target) {
                    let (mu, s_raw) = (p[0], p[1]);
                    let s = s_raw.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX);
                    let inv_var = (-2.0 * s).exp();
                    let r = x - mu;
                    dp[0] = -g[0] * r * inv_var / n;
                    dp[1] = if (LOG_SCALE_MIN..=LOG_SCALE_MAX).contains(&s_raw) {
                        g[0] * (1.0 - r * r * inv_var) / n
                    } else {
                        0.0
                    };
                }
                acc(*params, &d);
            }
            Op::WeightedSum { terms } => {
                for (n, w) in terms {
                    acc(*n, &[g[0] * w]);
                }
            }
        }
    }

    #[cfg(test)]
    fn push_unchecked(&mut self, value: Tensor, inputs_from: NodeId) -> NodeId {
        self.nodes.push(Node { value, op: Op::Sum { input: inputs_from }, needs_grad: true });
        NodeId(self.nodes.len() - 1)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `½(ln 2π + 2s + (x − mu)² e^{−2s})` with `s` clamped to the allowed range.
pub fn gaussian_nll_value(mu: f64, s: f64, x: f64) -> f64 {
    let s = s.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX);
    HALF_LN_2PI + s + 0.5 * (x - mu).powi(2) * (-2.0 * s).exp()
}
