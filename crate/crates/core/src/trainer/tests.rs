use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{AdamConfig, ParamId};
use crate::N_BINS;

fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    for (k, v) in [
        ("crop_frames", "12"),
        ("trim_frames", "2"),
        ("batch_converter", "2"),
        ("batch_vocoder", "3"),
        ("channels", "6"),
        ("n_g", "1"),
        ("n_d", "1"),
        ("kernel", "3"),
        ("vocoder_hidden", "4"),
        ("upsample_widths", "8, 8, 8"),
        ("head_hidden", "4"),
        ("adam_converter", "1e-3, 0.5, 0.999"),
        ("adam_vocoder", "1e-3, 0.5, 0.999"),
        ("seed", "5"),
    ] {
        c.set(k, v).unwrap();
    }
    c.validate().unwrap();
    c
}

fn tone_corpus(bin: usize, frames: &[usize], seed: u64) -> Vec<Spectrogram> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    frames
        .iter()
        .map(|&f| {
            let mut v = vec![0.0; f * N_BINS];
            for t in 0..f {
                v[t * N_BINS + bin] = 1.0 + r.random_range(0.0..0.2);
            }
            Spectrogram::new(f, v).unwrap()
        })
        .collect()
}

fn wave_corpus() -> Vec<Waveform> {
    let n = 254 + 128 * 5;
    vec![Waveform::new((0..n).map(|i| 0.3 * (i as f64 * 0.2).sin()).collect()).unwrap()]
}

fn values(store: &ParamStore, ids: &[ParamId]) -> Vec<f64> {
    store.flatten(ids)
}

#[test]
fn single_item_corpus_crops_from_start() {
    let corpus = vec![Spectrogram::new(160, (0..160 * N_BINS).map(|i| i as f64).collect()).unwrap()];
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        assert_eq!(sample_crop(&corpus, 160, &mut r).unwrap(), corpus[0]);
    }
}

#[test]
fn offsets_are_uniform() {
    let corpus = vec![Spectrogram::new(161, (0..161 * N_BINS).map(|i| (i / N_BINS) as f64).collect()).unwrap()];
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let zeros = (0..n).filter(|_| sample_crop(&corpus, 160, &mut r).unwrap().frame(0)[0] == 0.0).count();
    let freq = zeros as f64 / n as f64;
    assert!((freq - 0.5).abs() <= 0.02, "{freq}");
}

#[test]
fn crops_stay_inside_one_eligible_utterance() {
    let corpus: Vec<Spectrogram> = [20usize, 5, 14]
        .iter()
        .enumerate()
        .map(|(u, &f)| Spectrogram::new(f, (0..f * N_BINS).map(|i| (1000 * u + i / N_BINS) as f64).collect()).unwrap())
        .collect();
    assert_eq!(eligible_count(&corpus, 12), 2);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let c = sample_crop(&corpus, 12, &mut r).unwrap();
        let first = c.frame(0)[0];
        let u = (first / 1000.0) as usize;
        assert_ne!(u, 1);
        for t in 0..12 {
            assert_eq!(c.frame(t)[0], first + t as f64);
        }
    }
    assert!(matches!(sample_crop(&corpus, 21, &mut r), Err(Error::NoEligibleUtterance(21))));
}

#[test]
fn converter_steps_are_deterministic() {
    let (a, b) = (tone_corpus(10, &[20, 16], 1), tone_corpus(20, &[18], 2));
    let run = || {
        let mut t = ConverterTrainer::new(tiny_config()).unwrap();
        (0..3).map(|_| t.step(&a, &b).unwrap()).collect::<Vec<_>>()
    };
    let first = run();
    assert_eq!(first, run());
    assert!(first.iter().all(|l| l.discriminator.total.is_finite() && l.generator.total.is_finite()));
}

#[test]
fn phases_touch_only_their_own_parameters() {
    let (a, b) = (tone_corpus(10, &[20], 1), tone_corpus(20, &[18], 2));
    let mut full = ConverterTrainer::new(tiny_config()).unwrap();
    let mut manual = full.clone();
    let (g_ids, d_ids) = (full.pair.generator_params(), full.pair.discriminator_params());
    let g0 = values(&full.pair.store, &g_ids);
    let d0 = values(&full.pair.store, &d_ids);
    let losses = full.step(&a, &b).unwrap();

    // Replay the discriminator phase alone with the same draws.
    let m = &mut manual;
    let (n, crop) = (m.config.batch_converter, m.config.crop_frames);
    let dx = sample_batch(&a, n, crop, &mut m.rng).unwrap();
    let dy = sample_batch(&b, n, crop, &mut m.rng).unwrap();
    let _gx = sample_batch(&a, n, crop, &mut m.rng).unwrap();
    let _gy = sample_batch(&b, n, crop, &mut m.rng).unwrap();
    m.pair.power_iterate(true);
    let (graph, loss, d_terms) = discriminator_loss(&m.pair, &dx, &dy, &mut m.rng).unwrap();
    assert_eq!(d_terms, losses.discriminator);
    m.pair.store.zero_grad();
    graph.backward(loss, &mut m.pair.store).unwrap();
    assert!(g_ids.iter().all(|id| m.pair.store.grad(*id).iter().all(|&g| g == 0.0)));
    m.opts.discriminator.step(&mut m.pair.store).unwrap();

    assert_eq!(values(&m.pair.store, &g_ids), g0);
    assert_ne!(values(&m.pair.store, &d_ids), d0);
    assert_eq!(values(&full.pair.store, &d_ids), values(&m.pair.store, &d_ids));
    assert_ne!(values(&full.pair.store, &g_ids), g0);
}

#[test]
fn non_finite_discriminator_loss_rejects_step() {
    let (a, b) = (tone_corpus(10, &[20], 1), tone_corpus(20, &[18], 2));
    let mut t = ConverterTrainer::new(tiny_config()).unwrap();
    let bias = t.pair.store.id("d_x.output.bias").unwrap();
    t.pair.store.get_mut(bias).value.data_mut()[0] = f64::NAN;
    let before = values(&t.pair.store, &t.pair.generator_params());
    assert!(matches!(t.step(&a, &b), Err(Error::NonFiniteLoss { step: 1 })));
    assert_eq!(values(&t.pair.store, &t.pair.generator_params()), before);
    assert_eq!((t.step, t.opts.discriminator.step), (0, 0));
}

#[test]
fn state_stays_on_f32_lattice() {
    let (a, b) = (tone_corpus(10, &[20], 1), tone_corpus(20, &[18], 2));
    let mut t = ConverterTrainer::new(tiny_config()).unwrap();
    t.step(&a, &b).unwrap();
    let on_lattice = |v: &f64| *v as f32 as f64 == *v;
    assert!(t.pair.store.iter().all(|p| p.value.data().iter().all(on_lattice)));
    assert!(t.opts.generator.first_moment.iter().flatten().all(on_lattice));
    assert!(t.pair.d_y.power.iter().all(|p| p.u.iter().all(on_lattice)));
}

#[test]
fn converter_checkpoint_round_trip_and_resume() {
    let (a, b) = (tone_corpus(10, &[20], 1), tone_corpus(20, &[18, 13], 2));
    let mut straight = ConverterTrainer::new(tiny_config()).unwrap();
    for _ in 0..3 {
        straight.step(&a, &b).unwrap();
    }
    let cp = straight.checkpoint();
    let bytes = cp.to_bytes();
    let mut resumed = ConverterTrainer::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(resumed.checkpoint().to_bytes(), bytes);
    assert_eq!(resumed.pair.store, straight.pair.store);
    for _ in 0..10 {
        assert_eq!(straight.step(&a, &b).unwrap(), resumed.step(&a, &b).unwrap());
    }
}

#[test]
fn wrong_block_count_names_parameter() {
    let cp = ConverterTrainer::new(tiny_config()).unwrap().checkpoint();
    let mut cfg = tiny_config();
    cfg.n_g = 2;
    let mut other = ConverterTrainer::new(cfg).unwrap();
    let e = other.restore(&cp).unwrap_err();
    assert!(matches!(&e, Error::CheckpointShapeMismatch { name, .. } if name == "g_xy.block1.conv1.weight"), "{e}");
    let mut cfg = tiny_config();
    cfg.channels = 7;
    let e = ConverterTrainer::new(cfg).unwrap().restore(&cp).unwrap_err();
    assert!(matches!(&e, Error::CheckpointShapeMismatch { name, .. } if name == "g_xy.input.weight"), "{e}");
    let v = VocoderTrainer::new(tiny_config()).unwrap().checkpoint();
    assert!(matches!(other.restore(&v), Err(Error::CheckpointKind { .. })));
}

#[test]
fn vocoder_step_reports_pre_update_loss() {
    let corpus = vocoder_corpus(&wave_corpus()).unwrap();
    let mut t = VocoderTrainer::new(tiny_config()).unwrap();
    let batch: Vec<&Segment> = corpus.iter().take(3).collect();
    let (g, l) = teacher_forced_graph(&t.net, &t.store, &batch).unwrap();
    let expected = g.value(l).item();
    let got = train_vocoder_step(&t.net, &mut t.store, &batch, &mut t.opt).unwrap();
    assert_eq!(got, expected);
    let (g, l) = teacher_forced_graph(&t.net, &t.store, &batch).unwrap();
    assert_ne!(g.value(l).item(), expected);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let corpus = vocoder_corpus(&wave_corpus()).unwrap();
    let t = VocoderTrainer::new(tiny_config()).unwrap();
    let mut store = t.store.clone();
    let mut opt = AdamState::new(AdamConfig::new(0.0, 0.5, 0.999), &store, t.net.params()).unwrap();
    let batch: Vec<&Segment> = corpus.iter().collect();
    let l1 = train_vocoder_step(&t.net, &mut store, &batch, &mut opt).unwrap();
    let l2 = train_vocoder_step(&t.net, &mut store, &batch, &mut opt).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(store, t.store);
}

#[test]
fn vocoder_resume_matches_uninterrupted_run() {
    let corpus = vocoder_corpus(&wave_corpus()).unwrap();
    let mut straight = VocoderTrainer::new(tiny_config()).unwrap();
    for _ in 0..2 {
        straight.step(&corpus).unwrap();
    }
    let bytes = straight.checkpoint().to_bytes();
    let mut resumed = VocoderTrainer::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(resumed.checkpoint().to_bytes(), bytes);
    for _ in 0..10 {
        assert_eq!(straight.step(&corpus).unwrap(), resumed.step(&corpus).unwrap());
    }
    assert!(matches!(straight.step(&[]), Err(Error::EmptyInput(_))));
}

#[test]
fn run_loop_logging_and_checkpoints() {
    let (a, b) = (tone_corpus(10, &[20], 1), tone_corpus(20, &[18], 2));
    let mut cfg = tiny_config();
    let run = |cfg: &TrainConfig| {
        let mut t = ConverterTrainer::new(cfg.clone()).unwrap();
        let mut log = Vec::new();
        let mut saved = Vec::new();
        run_converter(&mut t, &a, &b, &mut log, &mut |cp| {
            saved.push(cp.step);
            Ok(())
        })
        .unwrap();
        (String::from_utf8(log).unwrap(), saved)
    };
    let (log, saved) = run(&cfg);
    assert!(log.is_empty());
    assert_eq!(saved, vec![0]);

    cfg.steps = 5;
    cfg.checkpoint_every = 2;
    let (log, saved) = run(&cfg);
    assert_eq!(saved, vec![0, 2, 4, 5]);
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 5);
    for (i, l) in lines.iter().enumerate() {
        let f: Vec<&str> = l.split('\t').collect();
        assert_eq!(f.len(), 3);
        assert_eq!(f[0], (i + 1).to_string());
        assert!(f[1].parse::<f64>().is_ok() && f[2].parse::<f64>().is_ok());
    }
    assert_eq!(run(&cfg).0, log);

    let corpus = vocoder_corpus(&wave_corpus()).unwrap();
    let mut t = VocoderTrainer::new(cfg.clone()).unwrap();
    let mut vlog = Vec::new();
    run_vocoder(&mut t, &corpus, &mut vlog, &mut |_| Ok(())).unwrap();
    let vlog = String::from_utf8(vlog).unwrap();
    assert_eq!(vlog.lines().count(), 5);
    assert!(vlog.lines().all(|l| l.split('\t').count() == 2));
}
