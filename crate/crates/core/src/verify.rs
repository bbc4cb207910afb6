//! Checks of the fast paths against the brute-force oracles.
//!
//! Every check yields a [`ToleranceReport`]; [`run_all`] gathers them in a
//! fixed order so reports can be diffed between runs. All inputs are seeded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::converter::{
    discriminator_loss, generator_loss, spectrogram_tensor, trim_edges, ConverterConfig, ConverterPair,
};
use crate::dsp::{frame_count, stft, Spectrogram, Waveform};
use crate::nn::{matrix_dims, AdamConfig, AdamState, Graph, NodeId, ParamId, ParamStore, PowerIterState, Tensor};
use crate::oracles::{
    adam_recurrence_oracle, dft_oracle, discriminator_loss_oracle, finite_difference_grad, gaussian_moment_oracle,
    gaussian_nll_oracle, naive_conv1d, naive_linear, naive_mean, singular_value_oracle, NaivePair, ToleranceReport,
};
use crate::vocoder::{
    gaussian_nll, segments, synthesize, teacher_forced_graph, GaussianOut, Segment, VocoderConfig, VocoderNet,
};
use crate::{Error, Result, HOP_LEN, N_BINS, WINDOW_LEN};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-3;
/// Relative tolerance of gradient checks.
pub const GRAD_REL_TOL: f64 = 1e-3;
/// Absolute error always accepted by gradient checks.
pub const GRAD_ABS_FLOOR: f64 = 1e-6;
/// Coordinates sampled per parameter tensor when it is larger than this.
const MAX_COORDS_PER_TENSOR: usize = 48;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Name of a gradient check (e.g. `"conv1d"`) whose analytic gradient is
    /// deliberately corrupted, to exercise the failure path.
    pub corrupt_gradient: Option<String>,
}

/// Every suite in report order.
pub fn run_all(opts: &VerifyOptions) -> Vec<ToleranceReport> {
    let mut out = Vec::new();
    out.extend(gradient_suite(opts));
    out.extend(spectral_norm_suite(100, 50, 11));
    out.extend(gaussian_suite());
    out.extend(hinge_suite());
    out.extend(shape_suite());
    out.extend(stft_suite(50, 10, 13));
    out.extend(forward_oracle_suite());
    out.extend(adam_suite());
    out
}

pub fn all_pass(reports: &[ToleranceReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

fn failed(name: &str, e: Error) -> ToleranceReport {
    let mut r = ToleranceReport::bound(format!("{name} ({e})"), f64::INFINITY, 0.0);
    r.pass = false;
    r
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Uniform values in `±[gap, hi)`, away from kinks at zero.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, gap: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.random_range(gap..hi);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Turns any node into a scalar that is linear in it: `mean |a - t|` with
/// `t` far from every value, i.e. a random-sign projection.
fn project(g: &mut Graph, node: NodeId, signs: &[f64]) -> Result<NodeId> {
    let shape = g.value(node).shape().to_vec();
    let target = g.constant(tensor(&shape, signs.iter().map(|s| 100.0 * s).collect()));
    g.mean_abs_diff(node, target)
}

fn random_signs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Compares backward-pass gradients of `build`'s loss with central
/// differences over every parameter in `store` (a seeded subset of
/// coordinates for large tensors).
fn grad_check<F>(name: &str, store: &ParamStore, build: F, opts: &VerifyOptions, seed: u64) -> ToleranceReport
where
    F: Fn(&ParamStore) -> Result<(Graph, NodeId)>,
{
    grad_check_ids(name, store, store.ids().collect(), MAX_COORDS_PER_TENSOR, build, opts, seed)
}

/// [`grad_check`] restricted to `ids`, for losses that treat the other
/// parameters as constants, sampling at most `max_coords` per tensor.
fn grad_check_ids<F>(
    name: &str,
    store: &ParamStore,
    ids: Vec<ParamId>,
    max_coords: usize,
    build: F,
    opts: &VerifyOptions,
    seed: u64,
) -> ToleranceReport
where
    F: Fn(&ParamStore) -> Result<(Graph, NodeId)>,
{
    let run = || -> Result<ToleranceReport> {
        let mut store = store.clone();
        let (g, loss) = build(&store)?;
        store.zero_grad();
        g.backward(loss, &mut store)?;
        let grads = store.flatten_grads(&ids);
        let base = store.flatten(&ids);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coords = Vec::new();
        let mut offset = 0;
        for id in &ids {
            let n = store.value(*id).len();
            if n <= max_coords {
                coords.extend(offset..offset + n);
            } else {
                coords.extend(rand::seq::index::sample(&mut rng, n, max_coords).into_iter().map(|i| offset + i));
            }
            offset += n;
        }
        let mut analytic: Vec<f64> = coords.iter().map(|&c| grads[c]).collect();
        if opts.corrupt_gradient.as_deref() == Some(name) {
            analytic[0] += 0.5 + analytic[0].abs();
        }

        let mut probe = store.clone();
        let mut full = base.clone();
        let sub: Vec<f64> = coords.iter().map(|&c| base[c]).collect();
        let mut eval_error = None;
        let numeric = finite_difference_grad(
            |p| {
                for (&c, &v) in coords.iter().zip(p) {
                    full[c] = v;
                }
                probe.assign(&ids, &full);
                for (&c, &v) in coords.iter().zip(&sub) {
                    full[c] = v;
                }
                match build(&probe) {
                    Ok((g, l)) => g.value(l).item(),
                    Err(e) => {
                        eval_error.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            &sub,
            FD_STEP,
        );
        if let Some(e) = eval_error {
            return Err(e);
        }
        Ok(ToleranceReport::compare(format!("grad {name}"), &analytic, &numeric?, GRAD_REL_TOL, GRAD_ABS_FLOOR))
    };
    run().unwrap_or_else(|e| failed(&format!("grad {name}"), e))
}

fn op_store(rng: &mut ChaCha8Rng, specs: &[(&str, &[usize])]) -> ParamStore {
    let mut s = ParamStore::new();
    for (name, shape) in specs {
        let n = shape.iter().product();
        s.add(*name, tensor(shape, away_from_zero(rng, n, 0.05, 1.0))).expect("unique names");
    }
    s
}

fn p(store: &ParamStore, g: &mut Graph, name: &str) -> NodeId {
    g.param(store, store.id(name).expect("parameter exists"))
}

/// Finite-difference checks of every graph operation and of the three
/// training losses.
pub fn gradient_suite(opts: &VerifyOptions) -> Vec<ToleranceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();

    let s = op_store(&mut rng, &[("x", &[2, 3, 6]), ("w", &[4, 3, 3]), ("b", &[4])]);
    let signs = random_signs(&mut rng, 2 * 4 * 6);
    out.push(grad_check(
        "conv1d",
        &s,
        |s| {
            let mut g = Graph::new();
            let (x, w, b) = (p(s, &mut g, "x"), p(s, &mut g, "w"), p(s, &mut g, "b"));
            let y = g.conv1d(x, w, b)?;
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        1,
    ));

    let s = op_store(&mut rng, &[("x", &[3, 4]), ("w", &[5, 4]), ("b", &[5])]);
    let signs = random_signs(&mut rng, 15);
    out.push(grad_check(
        "linear",
        &s,
        |s| {
            let mut g = Graph::new();
            let (x, w, b) = (p(s, &mut g, "x"), p(s, &mut g, "w"), p(s, &mut g, "b"));
            let y = g.linear(x, w, b)?;
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        2,
    ));

    let s = op_store(&mut rng, &[("x", &[2, 7])]);
    let signs = random_signs(&mut rng, 14);
    out.push(grad_check(
        "leaky_relu",
        &s,
        |s| {
            let mut g = Graph::new();
            let x = p(s, &mut g, "x");
            let y = g.leaky_relu(x, 0.01);
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        3,
    ));
    out.push(grad_check(
        "relu",
        &s,
        |s| {
            let mut g = Graph::new();
            let x = p(s, &mut g, "x");
            let y = g.relu(x);
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        4,
    ));

    let s = op_store(&mut rng, &[("a", &[2, 3]), ("b", &[2, 3])]);
    let signs = random_signs(&mut rng, 6);
    out.push(grad_check(
        "add",
        &s,
        |s| {
            let mut g = Graph::new();
            let (a, b) = (p(s, &mut g, "a"), p(s, &mut g, "b"));
            let y = g.add(a, b)?;
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        5,
    ));
    out.push(grad_check(
        "scale",
        &s,
        |s| {
            let mut g = Graph::new();
            let a = p(s, &mut g, "a");
            let y = g.scale(a, -2.5);
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        6,
    ));

    let s = op_store(&mut rng, &[("x", &[2, 3, 5])]);
    let signs = random_signs(&mut rng, 6);
    out.push(grad_check(
        "global_avg_pool",
        &s,
        |s| {
            let mut g = Graph::new();
            let x = p(s, &mut g, "x");
            let y = g.global_avg_pool(x)?;
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        7,
    ));
    let signs3 = random_signs(&mut rng, 2 * 3 * 2);
    out.push(grad_check(
        "trim_frames",
        &s,
        |s| {
            let mut g = Graph::new();
            let x = p(s, &mut g, "x");
            let y = g.trim_frames(x, 1, 2)?;
            let l = project(&mut g, y, &signs3)?;
            Ok((g, l))
        },
        opts,
        8,
    ));

    let (batch, input, hidden) = (2, 3, 4);
    let s = op_store(
        &mut rng,
        &[
            ("x", &[batch, input]),
            ("h", &[batch, hidden]),
            ("w_ih", &[3 * hidden, input]),
            ("w_hh", &[3 * hidden, hidden]),
            ("b_ih", &[3 * hidden]),
            ("b_hh", &[3 * hidden]),
        ],
    );
    let signs = random_signs(&mut rng, batch * hidden);
    out.push(grad_check(
        "gru_cell",
        &s,
        |s| {
            let mut g = Graph::new();
            let [x, h, wi, wh, bi, bh] = ["x", "h", "w_ih", "w_hh", "b_ih", "b_hh"].map(|n| p(s, &mut g, n));
            // Two chained steps so the recurrent path is exercised too.
            let h1 = g.gru_cell(x, h, wi, wh, bi, bh)?;
            let h2 = g.gru_cell(x, h1, wi, wh, bi, bh)?;
            let l = project(&mut g, h2, &signs)?;
            Ok((g, l))
        },
        opts,
        9,
    ));

    let s = op_store(&mut rng, &[("a", &[2, 5]), ("b", &[2, 2])]);
    let signs = random_signs(&mut rng, 2 * 3);
    out.push(grad_check(
        "slice_cols",
        &s,
        |s| {
            let mut g = Graph::new();
            let a = p(s, &mut g, "a");
            let y = g.slice_cols(a, 1, 3)?;
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        10,
    ));
    let signs = random_signs(&mut rng, 2 * 7);
    out.push(grad_check(
        "concat_cols",
        &s,
        |s| {
            let mut g = Graph::new();
            let (a, b) = (p(s, &mut g, "a"), p(s, &mut g, "b"));
            let y = g.concat_cols(a, b)?;
            let l = project(&mut g, y, &signs)?;
            Ok((g, l))
        },
        opts,
        11,
    ));

    out.push(grad_check(
        "sum",
        &s,
        |s| {
            let mut g = Graph::new();
            let a = p(s, &mut g, "a");
            let l = g.sum(a);
            Ok((g, l))
        },
        opts,
        12,
    ));
    out.push(grad_check(
        "mean",
        &s,
        |s| {
            let mut g = Graph::new();
            let a = p(s, &mut g, "a");
            let l = g.mean(a)?;
            Ok((g, l))
        },
        opts,
        13,
    ));

    let s = op_store(&mut rng, &[("a", &[3, 4]), ("b", &[3, 4])]);
    out.push(grad_check(
        "mean_abs_diff",
        &s,
        |s| {
            let mut g = Graph::new();
            let (a, b) = (p(s, &mut g, "a"), p(s, &mut g, "b"));
            // Values lie in ±[0.05, 1), so |b + 1.1 sign(b)| > 1.15 and every
            // difference is at least 0.15 from the kink.
            let shift: Vec<f64> = s.value(s.id("b").unwrap()).data().iter().map(|v| 1.1 * v.signum()).collect();
            let shift = g.constant(tensor(&[3, 4], shift));
            let target = g.add(b, shift)?;
            let l = g.mean_abs_diff(a, target)?;
            Ok((g, l))
        },
        opts,
        14,
    ));

    let s = op_store(&mut rng, &[("x", &[2, 3])]);
    out.push(grad_check(
        "hinge",
        &s,
        |s| {
            let mut g = Graph::new();
            let x = p(s, &mut g, "x");
            // Margin 0 keeps every element at least 0.05 from the kink.
            let a = g.hinge(x, 0.0, 1.0)?;
            let b = g.hinge(x, 0.0, -1.0)?;
            let l = g.weighted_sum(vec![(a, 1.0), (b, 0.3)])?;
            Ok((g, l))
        },
        opts,
        15,
    ));

    let mut s = ParamStore::new();
    let mut ps = Vec::new();
    for _ in 0..4 {
        ps.push(rng.random_range(-1.0..1.0));
        ps.push(rng.random_range(-2.0..1.0));
    }
    s.add("params", tensor(&[4, 2], ps)).expect("unique");
    let targets = uniform(&mut rng, 4, -1.0, 1.0);
    out.push(grad_check(
        "gaussian_nll",
        &s,
        |s| {
            let mut g = Graph::new();
            let x = p(s, &mut g, "params");
            let l = g.gaussian_nll(x, targets.clone())?;
            Ok((g, l))
        },
        opts,
        16,
    ));

    let s = op_store(&mut rng, &[("a", &[3]), ("b", &[2])]);
    out.push(grad_check(
        "weighted_sum",
        &s,
        |s| {
            let mut g = Graph::new();
            let (a, b) = (p(s, &mut g, "a"), p(s, &mut g, "b"));
            let (a, b) = (g.sum(a), g.mean(b)?);
            let l = g.weighted_sum(vec![(a, 0.7), (b, -1.3)])?;
            Ok((g, l))
        },
        opts,
        17,
    ));

    out.push(generator_loss_check(opts));
    out.push(discriminator_loss_check(opts));
    out.push(vocoder_loss_check(opts));
    out
}

/// Shrinks every weight by `shrink` and draws every bias from `±[0.3, 0.6)`,
/// so each pre-activation sits near its bias, far from the activation kink
/// relative to the finite-difference step.
fn bias_dominated(store: &mut ParamStore, ids: &[ParamId], shrink: f64, rng: &mut ChaCha8Rng) {
    for &id in ids {
        let param = store.get_mut(id);
        let data = param.value.data_mut();
        if param.name.ends_with("bias") {
            let fresh = away_from_zero(rng, data.len(), 0.3, 0.6);
            data.copy_from_slice(&fresh);
        } else {
            data.iter_mut().for_each(|v| *v *= shrink);
        }
    }
}

/// Four-frame toy converter whose losses stay away from every kink. The
/// generators emit values near -3 for inputs in `[0.5, 1)`, so cycle and
/// identity differences are large; critics score near 0, inside the margin,
/// so every hinge term is active.
fn toy_pair(seed: u64) -> Result<(ConverterPair, Tensor, Tensor)> {
    let cfg = ConverterConfig {
        channels: 3,
        n_g: 1,
        n_d: 1,
        kernel: 3,
        crop_frames: 4,
        trim_frames: 1,
        ..ConverterConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pair = ConverterPair::new(cfg, &mut rng)?;
    // σ̂ is fixed from the initial weights; the shrink below then scales the
    // normalized critic weights too.
    pair.power_iterate(false);
    let ids: Vec<ParamId> = pair.store.ids().collect();
    bias_dominated(&mut pair.store, &ids, 0.01, &mut rng);
    for (name, value) in [("g_xy", -3.0), ("g_yx", -3.0), ("d_x", 0.0), ("d_y", 0.0)] {
        let id = pair.store.id(&format!("{name}.output.bias")).expect("output bias");
        pair.store.get_mut(id).value.data_mut().fill(value);
    }
    let batch = |rng: &mut ChaCha8Rng| tensor(&[2, N_BINS, 4], uniform(rng, 2 * N_BINS * 4, 0.5, 1.0));
    let (x, y) = (batch(&mut rng), batch(&mut rng));
    Ok((pair, x, y))
}

fn generator_loss_check(opts: &VerifyOptions) -> ToleranceReport {
    let (pair, x, y) = match toy_pair(21) {
        Ok(v) => v,
        Err(e) => return failed("grad generator_loss", e),
    };
    grad_check_ids(
        "generator_loss",
        &pair.store,
        pair.generator_params(),
        usize::MAX,
        |s| {
            let mut p = pair.clone();
            p.store = s.clone();
            let (g, l, _) = generator_loss(&p, &x, &y, &mut ChaCha8Rng::seed_from_u64(5))?;
            Ok((g, l))
        },
        opts,
        18,
    )
}

fn discriminator_loss_check(opts: &VerifyOptions) -> ToleranceReport {
    let (pair, x, y) = match toy_pair(22) {
        Ok(v) => v,
        Err(e) => return failed("grad discriminator_loss", e),
    };
    grad_check_ids(
        "discriminator_loss",
        &pair.store,
        pair.discriminator_params(),
        usize::MAX,
        |s| {
            let mut p = pair.clone();
            p.store = s.clone();
            let (g, l, _) = discriminator_loss(&p, &x, &y, &mut ChaCha8Rng::seed_from_u64(6))?;
            Ok((g, l))
        },
        opts,
        19,
    )
}

fn vocoder_loss_check(opts: &VerifyOptions) -> ToleranceReport {
    let run = || -> Result<ToleranceReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut store = ParamStore::new();
        let cfg = VocoderConfig { hidden: 4, upsample_widths: [6, 6, 6], head_hidden: 5 };
        let net = VocoderNet::new(&mut store, cfg, &mut rng)?;
        let ids: Vec<ParamId> = store.ids().collect();
        bias_dominated(&mut store, &ids, 0.1, &mut rng);
        let wave = Waveform::new(uniform(&mut rng, WINDOW_LEN + HOP_LEN, -0.5, 0.5))?;
        let segs = segments(&stft(&wave)?, &wave)?;
        let refs: Vec<&Segment> = segs.iter().collect();
        Ok(grad_check("teacher_forced_nll", &store, |s| teacher_forced_graph(&net, s, &refs), opts, 20))
    };
    run().unwrap_or_else(|e| failed("grad teacher_forced_nll", e))
}

/// Power iteration against the Jacobi singular-value oracle, and the
/// largest singular value after normalization.
///
/// Entries are uniform in `[0, 1)`. Zero-mean matrices of these shapes often
/// have nearly equal top singular values, and 50 iterations cannot resolve
/// such gaps to `1e-4`.
pub fn spectral_norm_suite(count: usize, iterations: usize, seed: u64) -> Vec<ToleranceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma_errors = Vec::with_capacity(count);
    let mut post_errors = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = rng.random_range(1..=64);
        let cols = rng.random_range(1..=320);
        let w = uniform(&mut rng, rows * cols, 0.0, 1.0);
        let mut state = PowerIterState::new(rows, &mut rng);
        let mut sigma = 1.0;
        for _ in 0..iterations {
            sigma = state.iterate(&w, rows, cols).unwrap_or(1.0);
        }
        let exact = singular_value_oracle(&w, rows, cols);
        sigma_errors.push((sigma - exact).abs() / exact);
        let normalized: Vec<f64> = w.iter().map(|v| v / sigma).collect();
        post_errors.push((singular_value_oracle(&normalized, rows, cols) - 1.0).abs());
    }
    let worst = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let mut scale_check = {
        let w = uniform(&mut rng, 8 * 24, -1.0, 1.0);
        let scaled: Vec<f64> = w.iter().map(|v| 3.7 * v).collect();
        let run = |w: &[f64]| {
            let mut st = PowerIterState::new(8, &mut ChaCha8Rng::seed_from_u64(1));
            let mut sigma = 1.0;
            for _ in 0..iterations {
                sigma = st.iterate(w, 8, 24).unwrap_or(1.0);
            }
            w.iter().map(|v| v / sigma).collect::<Vec<f64>>()
        };
        ToleranceReport::compare("spectral_norm scale_equivariance", &run(&scaled), &run(&w), 1e-4, 1e-9)
    };
    scale_check.tolerance = 1e-4;
    vec![
        ToleranceReport::bound(format!("spectral_norm sigma_vs_oracle n={count}"), worst(&sigma_errors), 1e-4),
        ToleranceReport::bound(format!("spectral_norm normalized_sigma n={count}"), worst(&post_errors), 0.01),
        scale_check,
        {
            let (rows, cols) = matrix_dims(&[4, 3, 5]);
            ToleranceReport::bound("spectral_norm matrix_view", ((rows, cols) != (4, 15)) as u8 as f64, 0.0)
        },
    ]
}

/// Exact NLL values, NLL against its oracle, sampler moments.
pub fn gaussian_suite() -> Vec<ToleranceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let at_mean = gaussian_nll(GaussianOut::new(0.3, 0.0), 0.3);
    let one_off = gaussian_nll(GaussianOut::new(0.3, 0.0), 1.3);
    let mut got = Vec::new();
    let mut want = Vec::new();
    for _ in 0..200 {
        let (mu, s, x) = (rng.random_range(-1.0..1.0), rng.random_range(-9.0..4.0), rng.random_range(-1.0..1.0));
        got.push(gaussian_nll(GaussianOut::new(mu, s), x));
        want.push(gaussian_nll_oracle(mu, s, x));
    }
    let (mean, var, _) = gaussian_moment_oracle(0.0, 0.0, 100_000, 29);
    vec![
        ToleranceReport::bound("gaussian nll(x=mu,s=0)", (at_mean - 0.918_938_5).abs(), 1e-6),
        ToleranceReport::bound("gaussian nll(x=mu+1,s=0)", (one_off - 1.418_938_5).abs(), 1e-6),
        ToleranceReport::compare("gaussian nll_vs_oracle", &got, &want, 1e-9, 1e-12),
        ToleranceReport::bound("gaussian sampler_mean", mean.abs(), 0.013),
        ToleranceReport::bound("gaussian sampler_variance", (var - 1.0).abs(), 0.02),
    ]
}

fn zero_critics(pair: &mut ConverterPair) {
    let ids = pair.discriminator_params();
    for id in ids {
        pair.store.get_mut(id).value.data_mut().fill(0.0);
    }
    pair.power_iterate(false);
}

/// `L_D = 2` for critics that output zero; `L_D = 0` once every real score
/// clears `m` and every fake score is below `-m`.
pub fn hinge_suite() -> Vec<ToleranceReport> {
    let run = || -> Result<Vec<ToleranceReport>> {
        let cfg = ConverterConfig { channels: 2, n_g: 1, n_d: 1, crop_frames: 8, trim_frames: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut pair = ConverterPair::new(cfg, &mut rng)?;
        let x = tensor(&[2, N_BINS, 8], uniform(&mut rng, 2 * N_BINS * 8, 0.5, 1.5));
        let y = tensor(&[2, N_BINS, 8], uniform(&mut rng, 2 * N_BINS * 8, 0.5, 1.5));
        zero_critics(&mut pair);
        let (_, _, zero) = discriminator_loss(&pair, &x, &y, &mut rng)?;

        // Generators emit -1 everywhere; critics compute the signed mean
        // over bins through two opposite channels.
        for gname in ["g_xy", "g_yx"] {
            for suffix in ["output.weight"] {
                let id = pair.store.id(&format!("{gname}.{suffix}")).expect("exists");
                pair.store.get_mut(id).value.data_mut().fill(0.0);
            }
            let id = pair.store.id(&format!("{gname}.output.bias")).expect("exists");
            pair.store.get_mut(id).value.data_mut().fill(-1.0);
        }
        for dname in ["d_x", "d_y"] {
            let id = pair.store.id(&format!("{dname}.input.weight")).expect("exists");
            let w = pair.store.get_mut(id).value.data_mut();
            for (i, v) in w.iter_mut().enumerate() {
                *v = if i < N_BINS { 1.0 } else { -1.0 } / N_BINS as f64;
            }
            let id = pair.store.id(&format!("{dname}.output.weight")).expect("exists");
            pair.store.get_mut(id).value.data_mut().copy_from_slice(&[1.0, -1.0]);
        }
        for _ in 0..20 {
            pair.power_iterate(false);
        }
        let (_, _, sep) = discriminator_loss(&pair, &x, &y, &mut rng)?;
        let naive = NaivePair {
            g_xy: pair.g_xy.to_naive(&pair.store),
            g_yx: pair.g_yx.to_naive(&pair.store),
            d_x: pair.d_x.to_naive(&pair.store),
            d_y: pair.d_y.to_naive(&pair.store),
            bins: N_BINS,
            trim: 2,
        };
        let items = |t: &Tensor| t.data().chunks_exact(N_BINS * 8).map(|c| c.to_vec()).collect::<Vec<_>>();
        let oracle: f64 = discriminator_loss_oracle(&naive, &items(&x), &items(&y), 8, 0.5).iter().sum();
        Ok(vec![
            ToleranceReport::bound("hinge L_D(D=0)=2", (zero.total - 2.0).abs(), 1e-9),
            ToleranceReport::bound("hinge L_D(separated)=0", sep.total.abs(), 0.0),
            ToleranceReport::bound("hinge separated_oracle=0", oracle.abs(), 0.0),
        ])
    };
    run().unwrap_or_else(|e| vec![failed("hinge", e)])
}

/// Frame counts through the converter and the vocoder.
pub fn shape_suite() -> Vec<ToleranceReport> {
    let run = || -> Result<Vec<ToleranceReport>> {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let cfg = ConverterConfig { channels: 16, ..ConverterConfig::default() };
        let pair = ConverterPair::new(cfg, &mut rng)?;
        let crop = Spectrogram::new(160, uniform(&mut rng, 160 * N_BINS, 0.0, 1.0))?;
        let out = pair.g_xy.infer(&pair.store, &spectrogram_tensor(&crop))?;
        let gen_frames = out.shape()[2];
        let out_spec = Spectrogram::from_bins_major(gen_frames, out.data())?;
        let trimmed = trim_edges(&out_spec, 16)?;
        let score = pair.d_y.score(&pair.store, &spectrogram_tensor(&trimmed), Some(&mut rng))?;

        let mut store = ParamStore::new();
        let net = VocoderNet::new(
            &mut store,
            VocoderConfig { hidden: 4, upsample_widths: [4, 4, 4], head_hidden: 4 },
            &mut rng,
        )?;
        let mut synth_errors = 0.0;
        for frames in [1, 3, 7] {
            let spec = Spectrogram::new(frames, uniform(&mut rng, frames * N_BINS, 0.0, 2.0))?;
            let w = synthesize(&net, &store, &spec, &mut rng)?;
            synth_errors += (w.len() as f64 - (frames * HOP_LEN) as f64).abs();
        }
        let mut count_errors = 0.0;
        for _ in 0..20 {
            let len = rng.random_range(WINDOW_LEN..20_000);
            let wave = Waveform::new(uniform(&mut rng, len, -0.5, 0.5))?;
            let expected = (len - WINDOW_LEN) / HOP_LEN + 1;
            count_errors += (stft(&wave)?.frames() as f64 - expected as f64).abs();
            count_errors += (frame_count(len) != Some(expected)) as u8 as f64;
        }
        Ok(vec![
            ToleranceReport::bound("shape generator 160->160", (gen_frames as f64 - 160.0).abs(), 0.0),
            ToleranceReport::bound("shape trim 160->128", (trimmed.frames() as f64 - 128.0).abs(), 0.0),
            ToleranceReport::bound("shape critic scalar", (score.len() as f64 - 1.0).abs(), 0.0),
            ToleranceReport::bound("shape synthesize frames*128", synth_errors, 0.0),
            ToleranceReport::bound("shape stft frame_count n=20", count_errors, 0.0),
        ])
    };
    run().unwrap_or_else(|e| vec![failed("shape", e)])
}

/// STFT frames against the direct DFT, and peak bins of bin-centred tones.
pub fn stft_suite(frames: usize, tones: usize, seed: u64) -> Vec<ToleranceReport> {
    let run = || -> Result<Vec<ToleranceReport>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wave = Waveform::new(uniform(&mut rng, 16_000, -0.9, 0.9))?;
        let spec = stft(&wave)?;
        let mut reports = Vec::new();
        let mut worst = 0.0f64;
        for _ in 0..frames {
            let t = rng.random_range(0..spec.frames());
            let start = t * HOP_LEN;
            let oracle = dft_oracle(&wave.samples()[start..start + WINDOW_LEN])?;
            let r = ToleranceReport::compare_scaled("frame", spec.frame(t), &oracle, 1e-6);
            worst = worst.max(r.max_rel_error);
        }
        reports.push(ToleranceReport::bound(format!("stft frame_vs_dft n={frames}"), worst, 1e-6));
        let mut mismatches = 0.0;
        for _ in 0..tones {
            let bin = rng.random_range(1..N_BINS - 1);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let samples: Vec<f64> = (0..4000)
                .map(|i| 0.5 * (std::f64::consts::TAU * bin as f64 * i as f64 / WINDOW_LEN as f64 + phase).sin())
                .collect();
            let s = stft(&Waveform::new(samples.clone())?)?;
            let oracle = dft_oracle(&samples[..WINDOW_LEN])?;
            let oracle_peak = crate::dsp::argmax(&oracle);
            for t in 0..s.frames() {
                if s.peak_bin(t) != bin || oracle_peak != bin {
                    mismatches += 1.0;
                }
            }
        }
        reports.push(ToleranceReport::bound(format!("stft tone_peak_bins n={tones}"), mismatches, 0.0));
        Ok(reports)
    };
    run().unwrap_or_else(|e| vec![failed("stft", e)])
}

/// Forward passes of conv1d, linear and pooling against plain loops.
pub fn forward_oracle_suite() -> Vec<ToleranceReport> {
    let run = || -> Result<Vec<ToleranceReport>> {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut g = Graph::new();
        let (c_in, c_out, frames, kernel) = (2, 3, 5, 3);
        let x = uniform(&mut rng, c_in * frames, -1.0, 1.0);
        let w = uniform(&mut rng, c_out * c_in * kernel, -1.0, 1.0);
        let b = uniform(&mut rng, c_out, -1.0, 1.0);
        let xn = g.constant(tensor(&[1, c_in, frames], x.clone()));
        let wn = g.constant(tensor(&[c_out, c_in, kernel], w.clone()));
        let bn = g.constant(tensor(&[c_out], b.clone()));
        let y = g.conv1d(xn, wn, bn)?;
        let conv = ToleranceReport::compare(
            "forward conv1d",
            g.value(y).data(),
            &naive_conv1d(&x, c_in, frames, &w, &b, c_out, kernel),
            1e-6,
            1e-12,
        );

        let x = uniform(&mut rng, 4, -1.0, 1.0);
        let w = uniform(&mut rng, 12, -1.0, 1.0);
        let b = uniform(&mut rng, 3, -1.0, 1.0);
        let xn = g.constant(tensor(&[1, 4], x.clone()));
        let wn = g.constant(tensor(&[3, 4], w.clone()));
        let bn = g.constant(tensor(&[3], b.clone()));
        let y = g.linear(xn, wn, bn)?;
        let lin = ToleranceReport::compare("forward linear", g.value(y).data(), &naive_linear(&x, &w, &b), 1e-6, 1e-12);

        let x = uniform(&mut rng, 128, -1.0, 1.0);
        let xn = g.constant(tensor(&[1, 1, 128], x.clone()));
        let y = g.global_avg_pool(xn)?;
        let pool = ToleranceReport::compare(
            "forward global_avg_pool",
            g.value(y).data(),
            &naive_mean(&x, 1, 128),
            1e-9,
            1e-15,
        );
        Ok(vec![conv, lin, pool])
    };
    run().unwrap_or_else(|e| vec![failed("forward", e)])
}

/// Adam against the scalar recurrence, and the sign-descent limit.
pub fn adam_suite() -> Vec<ToleranceReport> {
    let run = || -> Result<Vec<ToleranceReport>> {
        let mut store = ParamStore::new();
        let id = store.add("p", tensor(&[1], vec![0.25]))?;
        let mut adam = AdamState::new(AdamConfig::new(2e-4, 0.5, 0.999), &store, vec![id])?;
        let mut trace = Vec::new();
        for _ in 0..3 {
            store.zero_grad();
            store.get_mut(id).grad[0] = 1.0;
            adam.step(&mut store)?;
            trace.push(store.value(id).data()[0]);
        }
        let oracle = adam_recurrence_oracle(0.25, &[1.0; 3], 2e-4, 0.5, 0.999, 1e-8);
        let max_err = trace.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

        let mut store = ParamStore::new();
        let id = store.add("p", tensor(&[4], vec![0.0; 4]))?;
        let cfg = AdamConfig { alpha: 0.01, beta1: 0.0, beta2: 0.0, epsilon: 1e-12 };
        let mut adam = AdamState::new(cfg, &store, vec![id])?;
        let grads = [3.0, -0.5, 1e-3, -20.0];
        store.get_mut(id).grad.copy_from_slice(&grads);
        adam.step(&mut store)?;
        let expected: Vec<f64> = grads.iter().map(|g| -0.01 * g.signum()).collect();
        Ok(vec![
            ToleranceReport::bound("adam 3-step trace", max_err, 1e-10),
            ToleranceReport::compare("adam sign_descent", store.value(id).data(), &expected, 1e-6, 1e-12),
        ])
    };
    run().unwrap_or_else(|e| vec![failed("adam", e)])
}
