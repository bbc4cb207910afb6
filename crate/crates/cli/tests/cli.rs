use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cyclevox_cli::{cmd_convert, cmd_copy_synth, plot, CliConfig};
use cyclevox_core::converter::Direction;
use cyclevox_core::dsp::{read_grid, read_wav, stft, write_grid, write_wav, Spectrogram, Waveform};
use cyclevox_core::oracles::dft_oracle;
use cyclevox_core::trainer::{Checkpoint, ConverterTrainer};
use cyclevox_core::{N_BINS, WINDOW_LEN};
use tempfile::TempDir;

const TINY: &[&str] = &[
    "crop_frames=12",
    "trim_frames=2",
    "batch_converter=2",
    "batch_vocoder=2",
    "channels=4",
    "n_g=1",
    "n_d=1",
    "kernel=3",
    "vocoder_hidden=4",
    "upsample_widths=8,8,8",
    "head_hidden=4",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cyclevox"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn sine(path: &Path, freq: f64, len: usize) {
    let w: Vec<f64> = (0..len).map(|i| 0.5 * (std::f64::consts::TAU * freq * i as f64 / 16_000.0).sin()).collect();
    write_wav(&Waveform::new(w).unwrap(), path).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two one-utterance corpora of 0.3 s tones.
fn corpora(dir: &Path) -> (PathBuf, PathBuf) {
    let (a, b) = (dir.join("a"), dir.join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    sine(&a.join("a0.wav"), 300.0, 4800);
    sine(&b.join("b0.wav"), 700.0, 4800);
    (a, b)
}

fn train(kind: &str, dir: &Path, out: &Path, extra: &[&str]) -> Output {
    let (a, b) = corpora(dir);
    let mut args = vec![kind.to_string()];
    let mut sets: Vec<String> = TINY.iter().map(|s| s.to_string()).collect();
    sets.push(format!("corpus_a={}", p(&a)));
    sets.push(format!("corpus_b={}", p(&b)));
    sets.push(format!("output_dir={}", p(out)));
    sets.extend(extra.iter().map(|s| s.to_string()));
    for s in sets {
        args.push("--set".into());
        args.push(s);
    }
    bin().args(&args).output().unwrap()
}

#[test]
fn features_of_one_second_file_has_124_frames_and_csv_rows() {
    let dir = TempDir::new().unwrap();
    let wav = dir.path().join("tone.wav");
    sine(&wav, 440.0, 16_000);
    let out = dir.path().join("feat");
    let o = run(&["features", "--in", p(&wav), "--out", p(&out), "--csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_grid(out.join("tone.grid")).unwrap().frames(), 124);
    let csv = fs::read_to_string(out.join("tone.csv")).unwrap();
    assert_eq!(csv.lines().count(), 124);
    assert!(csv.lines().all(|l| l.split(',').count() == N_BINS));
}

#[test]
fn features_of_empty_directory_fails() {
    let dir = TempDir::new().unwrap();
    let o = run(&["features", "--in", p(dir.path()), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no input files"), "{}", stderr(&o));
}

#[test]
fn features_reports_bad_files_but_processes_the_rest() {
    let dir = TempDir::new().unwrap();
    sine(&dir.path().join("good.wav"), 440.0, 1000);
    fs::write(dir.path().join("bad.wav"), b"not audio").unwrap();
    let out = dir.path().join("o");
    let o = run(&["features", "--in", p(dir.path()), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.wav"));
    assert!(out.join("good.grid").exists());
}

#[test]
fn unknown_config_keys_are_usage_errors_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# toy\nsteps = 1\nlearning_rate = 3\n").unwrap();
    let o = run(&["train-converter", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = run(&["train-vocoder", "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn config_precedence_is_file_then_set_then_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "steps = 5\nseed = 1\ncorpus_a = x\n").unwrap();
    let args = cyclevox_cli::ConfigArgs { config: Some(cfg), overrides: vec!["steps=7".into(), "corpus_b = y".into()] };
    let c = CliConfig::load(&args, Some(9)).unwrap();
    assert_eq!(c.train.steps, 7);
    assert_eq!(c.train.seed, 9);
    assert_eq!(c.corpus_a, Some(PathBuf::from("x")));
    assert_eq!(c.corpus_b, Some(PathBuf::from("y")));
    let c = CliConfig::load(&cyclevox_cli::ConfigArgs { config: None, overrides: vec![] }, None).unwrap();
    assert_eq!(c.train.seed, cyclevox_core::trainer::DEFAULT_SEED);
}

#[test]
fn usage_errors_exit_with_status_2() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["features"]).status.code(), Some(2));
    let o = run(&[
        "convert",
        "--in",
        "x.wav",
        "--direction",
        "sideways",
        "--converter",
        "c",
        "--vocoder",
        "v",
        "--out",
        "o.wav",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["train-converter", "--set", "steps=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corpus_a"));
}

#[test]
fn zero_step_training_writes_initial_checkpoint_and_empty_log() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let o = train("train-converter", dir.path(), &out, &["steps=0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed: 20190"));
    assert_eq!(fs::read_to_string(out.join("converter_loss.tsv")).unwrap(), "");
    let cp = Checkpoint::load(&out.join("converter_step00000000.ckpt")).unwrap();
    assert_eq!(cp.step, 0);
    assert_eq!(fs::read(out.join("converter.ckpt")).unwrap(), cp.to_bytes());
}

#[test]
fn seeded_training_runs_reproduce_their_logs() {
    for kind in ["train-converter", "train-vocoder"] {
        let logs: Vec<String> = (0..2)
            .map(|_| {
                let dir = TempDir::new().unwrap();
                let out = dir.path().join("run");
                let o = train(kind, dir.path(), &out, &["steps=4", "checkpoint_every=2"]);
                assert!(o.status.success(), "{}", stderr(&o));
                let name = if kind == "train-converter" { "converter" } else { "vocoder" };
                for step in [0, 2, 4] {
                    assert!(out.join(format!("{name}_step{step:08}.ckpt")).exists());
                }
                fs::read_to_string(out.join(format!("{name}_loss.tsv"))).unwrap()
            })
            .collect();
        assert_eq!(logs[0].lines().count(), 4);
        assert_eq!(logs[0], logs[1], "{kind}");
    }
}

#[test]
fn resumed_training_continues_the_log() {
    let dir = TempDir::new().unwrap();
    let full = dir.path().join("full");
    assert!(train("train-converter", dir.path(), &full, &["steps=6"]).status.success());
    let first = dir.path().join("first");
    assert!(train("train-converter", dir.path(), &first, &["steps=3"]).status.success());
    let second = dir.path().join("second");
    let resume = format!("resume_checkpoint={}", p(&first.join("converter.ckpt")));
    let o = train("train-converter", dir.path(), &second, &["steps=6", &resume]);
    assert!(o.status.success(), "{}", stderr(&o));
    let full_log = fs::read_to_string(full.join("converter_loss.tsv")).unwrap();
    let tail: Vec<&str> = full_log.lines().skip(3).collect();
    let resumed = fs::read_to_string(second.join("converter_loss.tsv")).unwrap();
    assert_eq!(resumed.lines().collect::<Vec<_>>(), tail);
}

/// Trains toy models once for the conversion tests.
fn toy_checkpoints(dir: &Path) -> (PathBuf, PathBuf) {
    let out = dir.join("models");
    assert!(train("train-converter", dir, &out, &["steps=2"]).status.success());
    assert!(train("train-vocoder", dir, &out, &["steps=2"]).status.success());
    (out.join("converter.ckpt"), out.join("vocoder.ckpt"))
}

#[test]
fn convert_emits_frames_times_128_samples_deterministically() {
    let dir = TempDir::new().unwrap();
    let (conv, voc) = toy_checkpoints(dir.path());
    let wav = dir.path().join("in.wav");
    sine(&wav, 440.0, 16_000);
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let dest = dir.path().join(format!("out{i}.wav"));
            let o = run(&[
                "--seed",
                "4",
                "convert",
                "--in",
                p(&wav),
                "--direction",
                "a2b",
                "--converter",
                p(&conv),
                "--vocoder",
                p(&voc),
                "--out",
                p(&dest),
            ]);
            assert!(o.status.success(), "{}", stderr(&o));
            assert!(stderr(&o).contains("seed: 4"));
            assert_eq!(read_wav(&dest).unwrap().len(), 124 * 128);
            fs::read(&dest).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn convert_rejects_swapped_checkpoints() {
    let dir = TempDir::new().unwrap();
    let (conv, voc) = toy_checkpoints(dir.path());
    let wav = dir.path().join("in.wav");
    sine(&wav, 440.0, 2000);
    let o = run(&[
        "convert",
        "--in",
        p(&wav),
        "--direction",
        "b2a",
        "--converter",
        p(&voc),
        "--vocoder",
        p(&conv),
        "--out",
        p(&dir.path().join("o.wav")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected converter"), "{}", stderr(&o));
}

#[test]
fn identity_converter_matches_copy_synthesis() {
    let dir = TempDir::new().unwrap();
    let (_, voc) = toy_checkpoints(dir.path());
    let mut cfg = cyclevox_core::trainer::TrainConfig::default();
    for kv in TINY {
        let (k, v) = kv.split_once('=').unwrap();
        cfg.set(k, v).unwrap();
    }
    // The identity generator passes every bin through its own channel.
    cfg.set("channels", "128").unwrap();
    let mut t = ConverterTrainer::new(cfg).unwrap();
    t.pair.g_xy.set_identity(&mut t.pair.store).unwrap();
    let ident = dir.path().join("identity.ckpt");
    t.checkpoint().save(&ident).unwrap();
    let wav = dir.path().join("in.wav");
    sine(&wav, 440.0, 8000);
    let converted = cmd_convert(&wav, Direction::AToB, &ident, &voc, 3).unwrap();
    let copied = cmd_copy_synth(&wav, &voc, 3).unwrap();
    assert_eq!(converted.len(), copied.len());
    let max = converted.samples().iter().zip(copied.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(max < 1e-6, "max difference {max}");
}

#[test]
fn untrained_vocoder_copy_synth_has_valid_length() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m");
    assert!(train("train-vocoder", dir.path(), &out, &["steps=0"]).status.success());
    let wav = dir.path().join("in.wav");
    sine(&wav, 440.0, 3000);
    let dest = dir.path().join("o.wav");
    let o = run(&["copy-synth", "--in", p(&wav), "--vocoder", p(&out.join("vocoder.ckpt")), "--out", p(&dest)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed: 20190"));
    let frames = (3000 - WINDOW_LEN) / 128 + 1;
    assert_eq!(read_wav(&dest).unwrap().len(), frames * 128);
}

fn read_pgm(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let header_end = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(2).unwrap().0 + 1;
    let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
    let mut parts = header.split_whitespace();
    assert_eq!(parts.next(), Some("P5"));
    let w: usize = parts.next().unwrap().parse().unwrap();
    let h: usize = parts.next().unwrap().parse().unwrap();
    assert_eq!(parts.next(), Some("255"));
    (w, h, bytes[header_end..].to_vec())
}

#[test]
fn plot_of_zero_grid_is_black_with_frame_by_bin_dimensions() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("z.grid");
    write_grid(&Spectrogram::zeros(7), &grid).unwrap();
    let img = dir.path().join("z.pgm");
    let o = run(&["plot", "--spec", p(&grid), "--out", p(&img)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (w, h, px) = read_pgm(&fs::read(&img).unwrap());
    assert_eq!((w, h), (7, N_BINS));
    assert_eq!(px.len(), 7 * N_BINS);
    assert!(px.iter().all(|&v| v == 0));
}

#[test]
fn plot_brightest_row_is_the_oracle_peak_bin() {
    let bin = 37usize;
    let freq = bin as f64 * 16_000.0 / WINDOW_LEN as f64;
    let samples: Vec<f64> =
        (0..2000).map(|i| 0.5 * (std::f64::consts::TAU * freq * i as f64 / 16_000.0).sin()).collect();
    let spec = stft(&Waveform::new(samples.clone()).unwrap()).unwrap();
    let oracle = dft_oracle(&samples[..WINDOW_LEN]).unwrap();
    let peak = (0..oracle.len()).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
    let (w, px) = (spec.frames(), plot::pixels(&spec));
    let brightest_row = (0..N_BINS).max_by_key(|&r| px[r * w]).unwrap();
    assert_eq!(N_BINS - 1 - brightest_row, peak);
    assert_eq!(peak, bin);
    assert_eq!(px.iter().copied().max(), Some(255));
}

#[test]
fn plot_rejects_malformed_grid() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("bad.grid");
    fs::write(&grid, [1u8, 2, 3]).unwrap();
    let o = run(&["plot", "--spec", p(&grid), "--out", p(&dir.path().join("x.pgm"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("malformed"), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_reports_are_stable() {
    let a = run(&["verify"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    let b = run(&["verify"]);
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).lines().all(|l| !l.starts_with("FAIL")));
    assert!(stdout(&a).contains("grad generator_loss"));
}

#[test]
fn verify_with_corrupted_gradient_fails_naming_the_op() {
    let o = run(&["verify", "--corrupt-gradient", "conv1d"]);
    assert_eq!(o.status.code(), Some(1));
    let failing: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("FAIL")).map(str::to_string).collect();
    assert_eq!(failing.len(), 1, "{failing:?}");
    assert!(failing[0].contains("grad conv1d"));
}
