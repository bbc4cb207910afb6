//! Command-line front end: feature extraction, training, conversion,
//! copy-synthesis, spectrogram plots and the oracle report.
//!
//! Everything is reachable through [`run`] so the commands can be tested
//! without spawning a process.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cyclevox_core::converter::{convert_utterance, Direction};
use cyclevox_core::dsp::{read_grid, read_wav, stft, write_csv, write_grid, write_wav, Spectrogram, Waveform};
use cyclevox_core::trainer::{
    eligible_count, parse_lines, run_converter, run_vocoder, vocoder_corpus, Checkpoint, ConverterTrainer, TrainConfig,
    VocoderTrainer, DEFAULT_SEED,
};
use cyclevox_core::verify::{all_pass, run_all, VerifyOptions};
use cyclevox_core::vocoder::synthesize;
use cyclevox_core::N_BINS;

pub mod plot;

#[derive(Debug, Parser)]
#[command(name = "cyclevox", version, about = "Unpaired voice conversion on magnitude spectrograms")]
pub struct Cli {
    /// Seed for every random choice; the default is fixed and printed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one spectrogram grid (and optionally a CSV) per WAV file.
    Features {
        /// A 16 kHz mono 16-bit WAV file or a directory of them.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write `<name>.csv` with one frame per row.
        #[arg(long)]
        csv: bool,
    },
    /// Train the converter on corpus_a (speaker A) and corpus_b (speaker B).
    TrainConverter(ConfigArgs),
    /// Train the vocoder on the WAV files of corpus_a and corpus_b.
    TrainVocoder(ConfigArgs),
    /// Convert a WAV file to the other speaker and vocode it.
    Convert {
        /// Source WAV file.
        #[arg(long = "in")]
        input: PathBuf,
        /// a2b maps speaker A (corpus_a) to speaker B; b2a the reverse.
        #[arg(long)]
        direction: String,
        /// Converter checkpoint.
        #[arg(long)]
        converter: PathBuf,
        /// Vocoder checkpoint.
        #[arg(long)]
        vocoder: PathBuf,
        /// Output WAV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-synthesize a WAV file from its own spectrogram.
    CopySynth {
        /// Source WAV file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Vocoder checkpoint.
        #[arg(long)]
        vocoder: PathBuf,
        /// Output WAV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a spectrogram grid as a binary PGM image (bin 0 at the bottom).
    Plot {
        /// A `.grid` file written by `features`.
        #[arg(long)]
        spec: PathBuf,
        /// Output `.pgm` file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the implementation against the brute-force oracles.
    Verify {
        /// Corrupt the analytic gradient of one check (exercises the failure path).
        #[arg(long, hide = true)]
        corrupt_gradient: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set steps=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// An error in how the program was invoked (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Training configuration plus the file locations a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub corpus_a: Option<PathBuf>,
    pub corpus_b: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Checkpoint to continue training from.
    pub resume_checkpoint: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            corpus_a: None,
            corpus_b: None,
            output_dir: None,
            resume_checkpoint: None,
        }
    }
}

impl CliConfig {
    pub const PATH_KEYS: &'static [&'static str] = &["corpus_a", "corpus_b", "output_dir", "resume_checkpoint"];

    pub fn set(&mut self, key: &str, value: &str) -> cyclevox_core::Result<()> {
        let path = Some(PathBuf::from(value));
        match key {
            "corpus_a" => self.corpus_a = path,
            "corpus_b" => self.corpus_b = path,
            "output_dir" => self.output_dir = path,
            "resume_checkpoint" => self.resume_checkpoint = path,
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> anyhow::Result<Self> {
        let mut cfg = Self::default();
        for (line, key, value) in parse_lines(text).map_err(|e| usage(e.to_string()))? {
            cfg.set(&key, &value).map_err(|e| usage(format!("line {line}: {e}")))?;
        }
        Ok(cfg)
    }

    /// File values, then `--set` overrides, then `--seed`.
    pub fn load(args: &ConfigArgs, seed: Option<u64>) -> anyhow::Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Self::from_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => Self::default(),
        };
        for o in &args.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| usage(e.to_string()))?;
        }
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        cfg.train.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Runs a parsed command. `Ok(false)` means the command ran but a check or
/// part of the processing failed (exit status 1).
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Features { input, out: dir, csv } => cmd_features(input, dir, *csv, out, err),
        Command::TrainConverter(args) => {
            let cfg = CliConfig::load(args, cli.seed)?;
            writeln!(err, "seed: {}", cfg.train.seed)?;
            cmd_train_converter(&cfg, out).map(|()| true)
        }
        Command::TrainVocoder(args) => {
            let cfg = CliConfig::load(args, cli.seed)?;
            writeln!(err, "seed: {}", cfg.train.seed)?;
            cmd_train_vocoder(&cfg, out).map(|()| true)
        }
        Command::Convert { input, direction, converter, vocoder, out: dest } => {
            let direction: Direction = direction.parse().map_err(|e: cyclevox_core::Error| usage(e.to_string()))?;
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            writeln!(err, "seed: {seed}")?;
            let wave = cmd_convert(input, direction, converter, vocoder, seed)?;
            write_wav(&wave, dest)?;
            writeln!(out, "wrote {} ({} samples)", dest.display(), wave.len())?;
            Ok(true)
        }
        Command::CopySynth { input, vocoder, out: dest } => {
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            writeln!(err, "seed: {seed}")?;
            let wave = cmd_copy_synth(input, vocoder, seed)?;
            write_wav(&wave, dest)?;
            writeln!(out, "wrote {} ({} samples)", dest.display(), wave.len())?;
            Ok(true)
        }
        Command::Plot { spec, out: dest } => {
            let spec = read_grid(spec)?;
            fs::write(dest, plot::pgm(&spec))?;
            writeln!(out, "wrote {} ({}x{})", dest.display(), spec.frames(), N_BINS)?;
            Ok(true)
        }
        Command::Verify { corrupt_gradient } => {
            let reports = run_all(&VerifyOptions { corrupt_gradient: corrupt_gradient.clone() });
            for r in &reports {
                writeln!(out, "{r}")?;
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            writeln!(out, "{} checks, {failed} failed", reports.len())?;
            Ok(all_pass(&reports))
        }
    }
}

/// WAV files under `path` (the file itself, or a directory's `*.wav` in name
/// order).
pub fn wav_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    list_inputs(path, &["wav"])
}

fn list_inputs(path: &Path, extensions: &[&str]) -> anyhow::Result<Vec<PathBuf>> {
    if !path.exists() {
        bail!("{}: no such file or directory", path.display());
    }
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| extensions.iter().any(|x| e.eq_ignore_ascii_case(x)))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("{}: no input files", path.display());
    }
    Ok(files)
}

fn cmd_features(input: &Path, dir: &Path, csv: bool, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<bool> {
    let files = wav_files(input)?;
    fs::create_dir_all(dir)?;
    let mut ok = true;
    for file in files {
        let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let result = (|| -> anyhow::Result<usize> {
            let spec = stft(&read_wav(&file)?)?;
            write_grid(&spec, dir.join(format!("{stem}.grid")))?;
            if csv {
                write_csv(&spec, dir.join(format!("{stem}.csv")))?;
            }
            Ok(spec.frames())
        })();
        match result {
            Ok(frames) => writeln!(out, "{}\t{frames} frames", file.display())?,
            Err(e) => {
                ok = false;
                writeln!(err, "error: {}: {e:#}", file.display())?;
            }
        }
    }
    Ok(ok)
}

/// Spectrograms of a converter corpus: WAV files are analysed, `.grid` files
/// read as they are.
pub fn load_spectrograms(path: &Path) -> anyhow::Result<Vec<Spectrogram>> {
    list_inputs(path, &["wav", "grid"])?
        .iter()
        .map(|f| {
            let spec = if f.extension().is_some_and(|e| e.eq_ignore_ascii_case("grid")) {
                read_grid(f)?
            } else {
                stft(&read_wav(f)?)?
            };
            Ok(spec)
        })
        .collect::<anyhow::Result<_>>()
        .with_context(|| format!("loading corpus {}", path.display()))
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> anyhow::Result<&'a Path> {
    value.as_deref().ok_or_else(|| usage(format!("configuration key {key} is required")))
}

/// Applies the run-length keys of a fresh configuration to a resumed trainer;
/// every other setting comes from the checkpoint.
fn resume_lengths(resumed: &mut TrainConfig, current: &TrainConfig) {
    resumed.steps = current.steps;
    resumed.checkpoint_every = current.checkpoint_every;
}

/// Writes `<dir>/<prefix>_step<N>.ckpt` and refreshes `<dir>/<prefix>.ckpt`.
fn checkpoint_saver<'a>(dir: &'a Path, prefix: &'a str) -> impl FnMut(&Checkpoint) -> cyclevox_core::Result<()> + 'a {
    move |cp: &Checkpoint| {
        cp.save(&dir.join(format!("{prefix}_step{:08}.ckpt", cp.step)))?;
        cp.save(&dir.join(format!("{prefix}.ckpt")))
    }
}

pub fn cmd_train_converter(cfg: &CliConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let a = load_spectrograms(required(&cfg.corpus_a, "corpus_a")?)?;
    let b = load_spectrograms(required(&cfg.corpus_b, "corpus_b")?)?;
    let dir = required(&cfg.output_dir, "output_dir")?;
    let mut trainer = match &cfg.resume_checkpoint {
        Some(path) => {
            let mut t = ConverterTrainer::from_checkpoint(&Checkpoint::load(path)?)?;
            resume_lengths(&mut t.config, &cfg.train);
            t
        }
        None => ConverterTrainer::new(cfg.train.clone())?,
    };
    let crop = trainer.config.crop_frames;
    for (key, corpus) in [("corpus_a", &a), ("corpus_b", &b)] {
        let short = corpus.len() - eligible_count(corpus, crop);
        if short > 0 {
            writeln!(out, "{key}: excluding {short} of {} utterances shorter than {crop} frames", corpus.len())?;
        }
    }
    fs::create_dir_all(dir)?;
    let mut log = BufWriter::new(fs::File::create(dir.join("converter_loss.tsv"))?);
    let result = run_converter(&mut trainer, &a, &b, &mut log, &mut checkpoint_saver(dir, "converter"));
    log.flush()?;
    result?;
    writeln!(out, "converter trained to step {}; checkpoints in {}", trainer.step, dir.display())?;
    Ok(())
}

pub fn cmd_train_vocoder(cfg: &CliConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut waves = Vec::new();
    for path in [&cfg.corpus_a, &cfg.corpus_b].into_iter().flatten() {
        for f in wav_files(path)? {
            waves.push(read_wav(&f).with_context(|| format!("loading {}", f.display()))?);
        }
    }
    if waves.is_empty() {
        return Err(usage("train-vocoder needs corpus_a or corpus_b"));
    }
    let corpus = vocoder_corpus(&waves)?;
    let dir = required(&cfg.output_dir, "output_dir")?;
    let mut trainer = match &cfg.resume_checkpoint {
        Some(path) => {
            let mut t = VocoderTrainer::from_checkpoint(&Checkpoint::load(path)?)?;
            resume_lengths(&mut t.config, &cfg.train);
            t
        }
        None => VocoderTrainer::new(cfg.train.clone())?,
    };
    fs::create_dir_all(dir)?;
    let mut log = BufWriter::new(fs::File::create(dir.join("vocoder_loss.tsv"))?);
    let result = run_vocoder(&mut trainer, &corpus, &mut log, &mut checkpoint_saver(dir, "vocoder"));
    log.flush()?;
    result?;
    writeln!(out, "vocoder trained to step {}; checkpoints in {}", trainer.step, dir.display())?;
    Ok(())
}

fn load_vocoder(path: &Path) -> anyhow::Result<VocoderTrainer> {
    let t = VocoderTrainer::from_checkpoint(&Checkpoint::load(path)?)
        .with_context(|| format!("loading vocoder checkpoint {}", path.display()))?;
    Ok(t)
}

/// analysis → conversion → negatives clamped to 0 → synthesis.
pub fn cmd_convert(
    input: &Path,
    direction: Direction,
    converter: &Path,
    vocoder: &Path,
    seed: u64,
) -> anyhow::Result<Waveform> {
    let conv = ConverterTrainer::from_checkpoint(&Checkpoint::load(converter)?)
        .with_context(|| format!("loading converter checkpoint {}", converter.display()))?;
    let voc = load_vocoder(vocoder)?;
    let spec = stft(&read_wav(input)?)?;
    let converted = convert_utterance(&conv.pair, &spec, direction)?.to_spectrogram()?;
    Ok(synthesize(&voc.net, &voc.store, &converted, &mut ChaCha8Rng::seed_from_u64(seed))?)
}

/// analysis → synthesis, skipping conversion.
pub fn cmd_copy_synth(input: &Path, vocoder: &Path, seed: u64) -> anyhow::Result<Waveform> {
    let voc = load_vocoder(vocoder)?;
    let spec = stft(&read_wav(input)?)?;
    Ok(synthesize(&voc.net, &voc.store, &spec, &mut ChaCha8Rng::seed_from_u64(seed))?)
}

/// Exit status for the outcome of [`run`].
pub fn exit_code(result: &anyhow::Result<bool>) -> u8 {
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) if e.is::<UsageError>() => 2,
        Err(_) => 1,
    }
}
