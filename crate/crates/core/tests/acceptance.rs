//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. `ACCEPTANCE_ONLY=7,8` runs a subset.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cyclevox_core::converter::{convert_utterance, Direction};
use cyclevox_core::dsp::{read_wav, stft, write_wav, Spectrogram, Waveform};
use cyclevox_core::oracles::ToleranceReport;
use cyclevox_core::trainer::{
    run_converter, run_vocoder, vocoder_corpus, Checkpoint, ConverterTrainer, TrainConfig, VocoderTrainer,
};
use cyclevox_core::verify::{
    gaussian_suite, gradient_suite, hinge_suite, shape_suite, spectral_norm_suite, stft_suite, VerifyOptions,
};
use cyclevox_core::vocoder::{synthesize, teacher_forced_nll};
use cyclevox_core::{HOP_LEN, SAMPLE_RATE, WINDOW_LEN};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn from_reports(reports: &[ToleranceReport], extra: &str) -> Outcome {
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.to_string()).collect();
    let mut detail = format!("{}/{} checks within tolerance{extra}", reports.len() - failed.len(), reports.len());
    if !failed.is_empty() {
        detail.push_str(&format!("; {}", failed.join("; ")));
    }
    outcome(failed.is_empty(), detail)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn configure(pairs: &[(&str, &str)]) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    for (k, v) in pairs {
        cfg.set(k, v).unwrap();
    }
    cfg
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let reports = gradient_suite(&VerifyOptions::default());
    let elapsed = start.elapsed();
    let mut o = from_reports(&reports, &format!(", {:.1}s (limit 120s)", secs(elapsed)));
    o.pass &= elapsed < Duration::from_secs(120);
    o
}

fn c2_spectral() -> Outcome {
    from_reports(&spectral_norm_suite(100, 50, 11), "")
}

fn c3_gaussian() -> Outcome {
    from_reports(&gaussian_suite(), "")
}

fn c4_hinge() -> Outcome {
    from_reports(&hinge_suite(), "")
}

fn c5_shapes() -> Outcome {
    from_reports(&shape_suite(), "")
}

fn c6_stft() -> Outcome {
    from_reports(&stft_suite(50, 10, 13), "")
}

/// Spectrogram of a sine at fractional bin `bin`.
fn tone(bin: f64, amp: f64, frames: usize, phase: f64) -> Spectrogram {
    let n = WINDOW_LEN + HOP_LEN * (frames - 1);
    let f = bin / WINDOW_LEN as f64;
    let w: Vec<f64> = (0..n).map(|i| amp * (std::f64::consts::TAU * f * i as f64 + phase).sin()).collect();
    stft(&Waveform::new(w).unwrap()).unwrap()
}

const K: f64 = 12.0;
const A_BIN: f64 = K + 0.3;
const B_BIN: f64 = 2.0 * K - 0.3;

/// Six 200-frame utterances per speaker: a tone near bin k (A) or 2k (B)
/// with random amplitude and phase.
fn speaker(bin: f64, rng: &mut ChaCha8Rng, count: usize) -> Vec<Spectrogram> {
    (0..count)
        .map(|_| tone(bin, rng.random_range(0.2..0.8), 200, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

fn overfit_config() -> TrainConfig {
    configure(&[("n_g", "2"), ("n_d", "2"), ("channels", "32"), ("batch_converter", "8"), ("steps", "2000")])
}

/// Peak learning rate of the overfit run; it decays linearly to zero.
const OVERFIT_LR: f64 = 2e-3;

fn c7_converter_overfit() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = speaker(A_BIN, &mut rng, 6);
    let b = speaker(B_BIN, &mut rng, 6);
    let held_out = speaker(A_BIN, &mut rng, 3);

    let mut t = ConverterTrainer::new(overfit_config()).unwrap();
    let steps = t.config.steps;
    let mut cycle = Vec::with_capacity(steps as usize);
    for s in 0..steps {
        let lr = OVERFIT_LR * (1.0 - s as f64 / steps as f64);
        t.opts.generator.config.alpha = lr;
        t.opts.discriminator.config.alpha = lr;
        match t.step(&a, &b) {
            Ok(l) => cycle.push(l.generator.cycle()),
            Err(e) => return outcome(false, format!("step {}: {e}", s + 1)),
        }
    }
    let at10 = cycle[9];
    let last10 = cycle[cycle.len() - 10..].iter().sum::<f64>() / 10.0;
    let ratio = last10 / at10;

    let (lo, hi) = ((2.0 * K) as usize - 2, (2.0 * K) as usize + 2);
    let (mut hits, mut frames) = (0, 0);
    for spec in &held_out {
        let out = convert_utterance(&t.pair, spec, Direction::AToB).unwrap();
        frames += out.frames();
        hits += (0..out.frames()).filter(|&f| (lo..=hi).contains(&out.peak_bin(f))).count();
    }
    let hit_rate = hits as f64 / frames as f64;
    let elapsed = start.elapsed();
    outcome(
        ratio < 0.1 && hit_rate >= 0.8 && elapsed < Duration::from_secs(15 * 60),
        format!(
            "cycle {last10:.4} (mean of steps 1991-2000) / {at10:.4} (step 10) = {ratio:.4} (< 0.1); \
             argmax in bins {lo}-{hi} for {:.1}% of {frames} held-out frames (>= 80%); {:.0}s",
            100.0 * hit_rate,
            secs(elapsed)
        ),
    )
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn vocoder_overfit_config() -> TrainConfig {
    configure(&[
        ("vocoder_hidden", "64"),
        ("upsample_widths", "32, 32, 32"),
        ("head_hidden", "32"),
        ("batch_vocoder", "8"),
        ("adam_vocoder", "2e-3, 0.5, 0.999"),
        ("steps", "3000"),
    ])
}

fn c8_vocoder_overfit() -> Outcome {
    let start = Instant::now();
    let samples: Vec<f64> = (0..SAMPLE_RATE as usize)
        .map(|i| 0.5 * (std::f64::consts::TAU * 440.0 * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    let wave = Waveform::new(samples).unwrap();
    let spec = stft(&wave).unwrap();
    let corpus = vocoder_corpus(std::slice::from_ref(&wave)).unwrap();
    let mut t = VocoderTrainer::new(vocoder_overfit_config()).unwrap();
    let (steps, peak) = (t.config.steps, t.config.adam_vocoder.alpha);
    for s in 0..steps {
        t.opt.config.alpha = peak * (1.0 - s as f64 / steps as f64);
        if let Err(e) = t.step(&corpus) {
            return outcome(false, format!("step {}: {e}", s + 1));
        }
    }
    let aligned = &wave.samples()[..spec.frames() * HOP_LEN];
    let nll = teacher_forced_nll(&t.net, &t.store, &spec, &wave).unwrap();
    let out = synthesize(&t.net, &t.store, &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let corr = pearson(out.samples(), aligned);
    let elapsed = start.elapsed();
    outcome(
        nll < 0.42 && corr > 0.9 && elapsed < Duration::from_secs(20 * 60),
        format!(
            "teacher-forced L_W {nll:.4} (< 0.42); copy-synthesis correlation {corr:.4} (> 0.9); {:.0}s",
            secs(elapsed)
        ),
    )
}

fn small_converter_config() -> TrainConfig {
    configure(&[
        ("n_g", "1"),
        ("n_d", "1"),
        ("channels", "8"),
        ("crop_frames", "32"),
        ("trim_frames", "4"),
        ("batch_converter", "4"),
    ])
}

fn small_vocoder_config() -> TrainConfig {
    configure(&[("vocoder_hidden", "8"), ("upsample_widths", "8, 8, 8"), ("head_hidden", "8"), ("batch_vocoder", "4")])
}

fn converter_log(cfg: TrainConfig, a: &[Spectrogram], b: &[Spectrogram]) -> Vec<u8> {
    let mut t = ConverterTrainer::new(cfg).unwrap();
    let mut log = Vec::new();
    run_converter(&mut t, a, b, &mut log, &mut |_| Ok(())).unwrap();
    log
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = speaker(A_BIN, &mut rng, 3);
    let b = speaker(B_BIN, &mut rng, 3);
    let wave = Waveform::new((0..6000).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
    let segments = vocoder_corpus(std::slice::from_ref(&wave)).unwrap();
    let mut problems = Vec::new();

    let mut cfg = small_converter_config();
    cfg.steps = 100;
    let (l1, l2) = (converter_log(cfg.clone(), &a, &b), converter_log(cfg.clone(), &a, &b));
    if l1 != l2 || l1.iter().filter(|&&c| c == b'\n').count() != 100 {
        problems.push("converter logs differ".to_string());
    }
    let mut vcfg = small_vocoder_config();
    vcfg.steps = 100;
    let vocoder_log = || {
        let mut t = VocoderTrainer::new(vcfg.clone()).unwrap();
        let mut log = Vec::new();
        run_vocoder(&mut t, &segments, &mut log, &mut |_| Ok(())).unwrap();
        log
    };
    if vocoder_log() != vocoder_log() {
        problems.push("vocoder logs differ".to_string());
    }

    // Resume after 10 steps through a file and compare the next 10 steps.
    cfg.steps = 20;
    let full = String::from_utf8(converter_log(cfg.clone(), &a, &b)).unwrap();
    let mut t = ConverterTrainer::new(cfg.clone()).unwrap();
    for _ in 0..10 {
        t.step(&a, &b).unwrap();
    }
    let path = dir.path().join("converter.ckpt");
    t.checkpoint().save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    if loaded.to_bytes() != std::fs::read(&path).unwrap() {
        problems.push("converter checkpoint round trip changed bytes".to_string());
    }
    let mut resumed = ConverterTrainer::from_checkpoint(&loaded).unwrap();
    let mut log = Vec::new();
    run_converter(&mut resumed, &a, &b, &mut log, &mut |_| Ok(())).unwrap();
    let tail: Vec<&str> = full.lines().skip(10).collect();
    let resumed_log = String::from_utf8(log).unwrap();
    if resumed_log.lines().collect::<Vec<_>>() != tail || tail.len() != 10 {
        problems.push("resumed converter trace differs".to_string());
    }

    vcfg.steps = 20;
    let mut uninterrupted = VocoderTrainer::new(vcfg.clone()).unwrap();
    let reference: Vec<f64> = (0..20).map(|_| uninterrupted.step(&segments).unwrap()).collect();
    let mut t = VocoderTrainer::new(vcfg).unwrap();
    for _ in 0..10 {
        t.step(&segments).unwrap();
    }
    let vpath = dir.path().join("vocoder.ckpt");
    t.checkpoint().save(&vpath).unwrap();
    let loaded = Checkpoint::load(&vpath).unwrap();
    if loaded.to_bytes() != std::fs::read(&vpath).unwrap() {
        problems.push("vocoder checkpoint round trip changed bytes".to_string());
    }
    let mut resumed = VocoderTrainer::from_checkpoint(&loaded).unwrap();
    let continued: Vec<f64> = (0..10).map(|_| resumed.step(&segments).unwrap()).collect();
    if continued.iter().map(|v| v.to_bits()).ne(reference[10..].iter().map(|v| v.to_bits())) {
        problems.push("resumed vocoder trace differs".to_string());
    }

    let detail = if problems.is_empty() {
        "100-step logs identical; 10-step resumes match; checkpoint bytes stable".to_string()
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn c10_end_to_end() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = speaker(A_BIN, &mut rng, 2);
    let b = speaker(B_BIN, &mut rng, 2);
    let samples: Vec<f64> = (0..SAMPLE_RATE as usize)
        .map(|i| 0.4 * (std::f64::consts::TAU * 300.0 * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    let input = dir.path().join("input.wav");
    write_wav(&Waveform::new(samples).unwrap(), &input).unwrap();

    let mut conv = ConverterTrainer::new(small_converter_config()).unwrap();
    for _ in 0..2 {
        conv.step(&a, &b).unwrap();
    }
    let conv_path = dir.path().join("converter.ckpt");
    conv.checkpoint().save(&conv_path).unwrap();
    let mut voc = VocoderTrainer::new(small_vocoder_config()).unwrap();
    let segs = vocoder_corpus(&[read_wav(&input).unwrap()]).unwrap();
    for _ in 0..2 {
        voc.step(&segs).unwrap();
    }
    let voc_path = dir.path().join("vocoder.ckpt");
    voc.checkpoint().save(&voc_path).unwrap();

    let mut files = Vec::new();
    for i in 0..2 {
        let out = match cyclevox_cli::cmd_convert(&input, Direction::AToB, &conv_path, &voc_path, 7) {
            Ok(w) => w,
            Err(e) => return outcome(false, format!("convert failed: {e:#}")),
        };
        let path = dir.path().join(format!("out{i}.wav"));
        write_wav(&out, &path).unwrap();
        files.push(path);
    }
    let spec = hound::WavReader::open(&files[0]).unwrap().spec();
    let valid = spec.channels == 1
        && spec.sample_rate == SAMPLE_RATE
        && spec.bits_per_sample == 16
        && spec.sample_format == hound::SampleFormat::Int;
    let frames = (SAMPLE_RATE as usize - WINDOW_LEN) / HOP_LEN + 1;
    let len = read_wav(&files[0]).map(|w| w.len()).unwrap_or(0);
    let identical = std::fs::read(&files[0]).unwrap() == std::fs::read(&files[1]).unwrap();
    outcome(
        valid && len == frames * HOP_LEN && identical,
        format!(
            "16-bit/16 kHz mono: {valid}; {len} samples (expected {frames} x {HOP_LEN} = {}); seeded reruns identical: {identical}",
            frames * HOP_LEN
        ),
    )
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient suite", c1_gradients),
        ("spectral normalization", c2_spectral),
        ("gaussian head exactness", c3_gaussian),
        ("hinge exactness", c4_hinge),
        ("shape pipeline", c5_shapes),
        ("stft correctness", c6_stft),
        ("converter overfit", c7_converter_overfit),
        ("vocoder overfit", c8_vocoder_overfit),
        ("determinism and persistence", c9_determinism),
        ("end-to-end smoke", c10_end_to_end),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        ran += 1;
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
