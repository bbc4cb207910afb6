//! Forward and backward kernels shared by the compute graph and the
//! graph-free inference paths. Layouts are row-major: sequences are
//! `[batch, channels, frames]`, dense activations `[batch, features]`.

/// `c = a · b + beta · c` for an `m×k` by `k×n` product with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the asserts above bound every index touched by the product.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub frames: usize,
    pub kernel: usize,
}

impl ConvDims {
    fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }
}

/// Output frames `lo..hi` whose tap at offset `off` lands inside the input.
fn valid_range(t: usize, off: isize) -> (usize, usize) {
    let lo = ((-off).max(0) as usize).min(t);
    let hi = ((t as isize - off).clamp(0, t as isize) as usize).max(lo);
    (lo, hi)
}

fn im2col(x: &[f64], d: &ConvDims, cols: &mut [f64]) {
    let (t, k, pad) = (d.frames, d.kernel, d.pad() as isize);
    for ci in 0..d.c_in {
        let src = &x[ci * t..(ci + 1) * t];
        for kk in 0..k {
            let row = &mut cols[(ci * k + kk) * t..(ci * k + kk + 1) * t];
            let off = kk as isize - pad;
            let (lo, hi) = valid_range(t, off);
            row[..lo].fill(0.0);
            if lo < hi {
                let s = (lo as isize + off) as usize;
                row[lo..hi].copy_from_slice(&src[s..s + hi - lo]);
            }
            row[hi..].fill(0.0);
        }
    }
}

fn col2im_add(dcols: &[f64], d: &ConvDims, dx: &mut [f64]) {
    let (t, k, pad) = (d.frames, d.kernel, d.pad() as isize);
    for ci in 0..d.c_in {
        let dst = &mut dx[ci * t..(ci + 1) * t];
        for kk in 0..k {
            let row = &dcols[(ci * k + kk) * t..(ci * k + kk + 1) * t];
            let off = kk as isize - pad;
            let (lo, hi) = valid_range(t, off);
            for t0 in lo..hi {
                dst[(t0 as isize + off) as usize] += row[t0];
            }
        }
    }
}

/// Stride-1 convolution with `(kernel - 1) / 2` zero frames on both edges.
pub fn conv1d_forward(x: &[f64], w: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
    let (t, ck) = (d.frames, d.c_in * d.kernel);
    let mut out = vec![0.0; d.batch * d.c_out * t];
    let mut cols = if d.kernel == 1 { Vec::new() } else { vec![0.0; ck * t] };
    for b in 0..d.batch {
        let xb = &x[b * d.c_in * t..(b + 1) * d.c_in * t];
        let src: &[f64] = if d.kernel == 1 {
            xb
        } else {
            im2col(xb, d, &mut cols);
            &cols
        };
        let ob = &mut out[b * d.c_out * t..(b + 1) * d.c_out * t];
        for (co, row) in ob.chunks_exact_mut(t).enumerate() {
            row.fill(bias[co]);
        }
        gemm(d.c_out, ck, t, w, (ck, 1), src, (t, 1), 1.0, ob, t);
    }
    out
}

/// Returns `(d_input, d_weight, d_bias)`; `d_input` only when requested.
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    d: &ConvDims,
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (t, ck) = (d.frames, d.c_in * d.kernel);
    let mut dw = vec![0.0; d.c_out * ck];
    let mut db = vec![0.0; d.c_out];
    let mut dx = need_input.then(|| vec![0.0; d.batch * d.c_in * t]);
    let mut cols = if d.kernel == 1 { Vec::new() } else { vec![0.0; ck * t] };
    let mut dcols = if need_input && d.kernel != 1 { vec![0.0; ck * t] } else { Vec::new() };
    for b in 0..d.batch {
        let xb = &x[b * d.c_in * t..(b + 1) * d.c_in * t];
        let gb = &grad_out[b * d.c_out * t..(b + 1) * d.c_out * t];
        for (co, row) in gb.chunks_exact(t).enumerate() {
            db[co] += row.iter().sum::<f64>();
        }
        let src: &[f64] = if d.kernel == 1 {
            xb
        } else {
            im2col(xb, d, &mut cols);
            &cols
        };
        gemm(d.c_out, t, ck, gb, (t, 1), src, (1, t), 1.0, &mut dw, ck);
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * d.c_in * t..(b + 1) * d.c_in * t];
            if d.kernel == 1 {
                gemm(ck, d.c_out, t, w, (1, ck), gb, (t, 1), 0.0, dxb, t);
            } else {
                gemm(ck, d.c_out, t, w, (1, ck), gb, (t, 1), 0.0, &mut dcols, t);
                col2im_add(&dcols, d, dxb);
            }
        }
    }
    (dx, dw, db)
}

/// `y = x · wᵀ + bias` for `x: [batch, n_in]`, `w: [n_out, n_in]`.
pub fn linear_forward(x: &[f64], w: &[f64], bias: &[f64], batch: usize, n_in: usize, n_out: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(batch, n_in, n_out, x, (n_in, 1), w, (1, n_in), 1.0, &mut y, n_out);
    y
}

/// Accumulates weight and bias gradients; returns the input gradient when requested.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    for row in grad_out.chunks_exact(n_out) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    gemm(n_out, batch, n_in, grad_out, (1, n_out), x, (n_in, 1), 1.0, dw, n_in);
    need_input.then(|| {
        let mut dx = vec![0.0; batch * n_in];
        gemm(batch, n_out, n_in, grad_out, (n_out, 1), w, (n_in, 1), 0.0, &mut dx, n_in);
        dx
    })
}

/// `max(0, x)` that keeps NaN, unlike `f64::max`.
pub(crate) fn relu(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate activations saved by the GRU forward pass, each `[batch, hidden]`.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub candidate: Vec<f64>,
    /// Recurrent part of the candidate pre-activation, `W_hn h + b_hn`.
    pub hidden_n: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct GruDims {
    pub batch: usize,
    pub input: usize,
    pub hidden: usize,
}

/// GRU cell with gate order (reset, update, candidate) in the stacked weights:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z  = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
pub fn gru_forward(
    x: &[f64],
    h: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    b_ih: &[f64],
    b_hh: &[f64],
    d: &GruDims,
) -> (Vec<f64>, GruCache) {
    let hs = d.hidden;
    let gi = linear_forward(x, w_ih, b_ih, d.batch, d.input, 3 * hs);
    let gh = linear_forward(h, w_hh, b_hh, d.batch, hs, 3 * hs);
    let n_el = d.batch * hs;
    let mut cache = GruCache {
        reset: vec![0.0; n_el],
        update: vec![0.0; n_el],
        candidate: vec![0.0; n_el],
        hidden_n: vec![0.0; n_el],
    };
    let mut out = vec![0.0; n_el];
    for b in 0..d.batch {
        let gi = &gi[b * 3 * hs..(b + 1) * 3 * hs];
        let gh = &gh[b * 3 * hs..(b + 1) * 3 * hs];
        for j in 0..hs {
            let idx = b * hs + j;
            let r = sigmoid(gi[j] + gh[j]);
            let z = sigmoid(gi[hs + j] + gh[hs + j]);
            let hn = gh[2 * hs + j];
            let n = (gi[2 * hs + j] + r * hn).tanh();
            out[idx] = (1.0 - z) * n + z * h[idx];
            cache.reset[idx] = r;
            cache.update[idx] = z;
            cache.candidate[idx] = n;
            cache.hidden_n[idx] = hn;
        }
    }
    (out, cache)
}

pub struct GruGrads {
    pub input: Option<Vec<f64>>,
    pub hidden: Option<Vec<f64>>,
}

/// Accumulates into the four parameter gradient buffers.
#[allow(clippy::too_many_arguments)]
pub fn gru_backward(
    x: &[f64],
    h: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    cache: &GruCache,
    grad_out: &[f64],
    d: &GruDims,
    grads: (&mut [f64], &mut [f64], &mut [f64], &mut [f64]),
    need: (bool, bool),
) -> GruGrads {
    let (dw_ih, dw_hh, db_ih, db_hh) = grads;
    let hs = d.hidden;
    let mut g_in = vec![0.0; d.batch * 3 * hs];
    let mut g_hid = vec![0.0; d.batch * 3 * hs];
    let mut dh_direct = vec![0.0; d.batch * hs];
    for b in 0..d.batch {
        for j in 0..hs {
            let idx = b * hs + j;
            let (r, z, n, hn) = (cache.reset[idx], cache.update[idx], cache.candidate[idx], cache.hidden_n[idx]);
            let g = grad_out[idx];
            dh_direct[idx] = g * z;
            let dn = g * (1.0 - z) * (1.0 - n * n);
            let dz = g * (h[idx] - n) * z * (1.0 - z);
            let dr = dn * hn * r * (1.0 - r);
            let row = b * 3 * hs;
            g_in[row + j] = dr;
            g_in[row + hs + j] = dz;
            g_in[row + 2 * hs + j] = dn;
            g_hid[row + j] = dr;
            g_hid[row + hs + j] = dz;
            g_hid[row + 2 * hs + j] = dn * r;
        }
    }
    let input = linear_backward(x, w_ih, &g_in, d.batch, d.input, 3 * hs, dw_ih, db_ih, need.0);
    let from_hidden = linear_backward(h, w_hh, &g_hid, d.batch, hs, 3 * hs, dw_hh, db_hh, need.1);
    let hidden = from_hidden.map(|mut dh| {
        for (a, b) in dh.iter_mut().zip(&dh_direct) {
            *a += b;
        }
        dh
    });
    GruGrads { input, hidden }
}
