//! Data sampling, training steps and resumable training loops.
//!
//! A trainer owns its model, both optimizer states and a single ChaCha8
//! stream from which every random draw is taken in a fixed order, so a run is
//! a pure function of its configuration and corpus. Parameters, Adam moments
//! and power-iteration vectors are kept on the `f32` lattice after every
//! update, which lets a checkpoint capture the state exactly.

mod checkpoint;
mod config;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{Checkpoint, Grid, ModelKind, OptimizerSection, PowerSection, RngState, MAGIC, VERSION};
pub use config::{parse_lines, TrainConfig, DEFAULT_SEED, KEYS};

use crate::converter::{
    batch_tensor, discriminator_loss, generator_loss, ConverterPair, DiscriminatorLoss, GeneratorLoss,
};
use crate::dsp::{stft, Spectrogram, Waveform};
use crate::nn::{AdamState, ParamStore, Tensor};
use crate::vocoder::{segments, teacher_forced_graph, Segment, VocoderNet};
use crate::{Error, Result};

/// Number of corpus items long enough for a `crop`-frame excerpt.
pub fn eligible_count(corpus: &[Spectrogram], crop: usize) -> usize {
    corpus.iter().filter(|s| s.frames() >= crop).count()
}

/// A contiguous `crop`-frame excerpt: utterance uniform among the eligible
/// ones, then start offset uniform over every valid position.
pub fn sample_crop<R: Rng + ?Sized>(corpus: &[Spectrogram], crop: usize, rng: &mut R) -> Result<Spectrogram> {
    let eligible: Vec<&Spectrogram> = corpus.iter().filter(|s| s.frames() >= crop).collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleUtterance(crop));
    }
    let item = eligible[rng.random_range(0..eligible.len())];
    let start = rng.random_range(0..=item.frames() - crop);
    item.slice(start, crop)
}

/// `n` crops stacked into `[n, bins, crop]`.
pub fn sample_batch<R: Rng + ?Sized>(corpus: &[Spectrogram], n: usize, crop: usize, rng: &mut R) -> Result<Tensor> {
    let crops = (0..n).map(|_| sample_crop(corpus, crop, rng)).collect::<Result<Vec<_>>>()?;
    batch_tensor(&crops)
}

/// Optimizers of the two converter phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterOptimizers {
    pub discriminator: AdamState,
    pub generator: AdamState,
}

/// Losses of one converter iteration, each measured before its own update.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterStepLosses {
    pub discriminator: DiscriminatorLoss,
    pub generator: GeneratorLoss,
}

fn check_finite(value: f64, step: u64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step })
    }
}

/// One converter iteration: a power-iteration refresh, a discriminator update
/// on `L_D` from `d_batch`, then a generator update on `L_G` from `g_batch`.
/// The discriminator phase never reaches generator parameters and the
/// generator phase only steps the generator optimizer.
///
/// A non-finite `L_D` rejects the iteration before any parameter changes; a
/// non-finite `L_G` leaves the discriminator update applied, so callers
/// should fall back to their last checkpoint.
pub fn train_converter_step<R: Rng + ?Sized>(
    pair: &mut ConverterPair,
    opts: &mut ConverterOptimizers,
    d_batch: (&Tensor, &Tensor),
    g_batch: (&Tensor, &Tensor),
    step: u64,
    rng: &mut R,
) -> Result<ConverterStepLosses> {
    pair.power_iterate(true);
    let (graph, loss, d_terms) = discriminator_loss(pair, d_batch.0, d_batch.1, rng)?;
    check_finite(d_terms.total, step)?;
    pair.store.zero_grad();
    graph.backward(loss, &mut pair.store)?;
    opts.discriminator.step(&mut pair.store)?;

    pair.refresh_sigmas();
    let (graph, loss, g_terms) = generator_loss(pair, g_batch.0, g_batch.1, rng)?;
    check_finite(g_terms.total, step)?;
    pair.store.zero_grad();
    graph.backward(loss, &mut pair.store)?;
    opts.generator.step(&mut pair.store)?;
    pair.store.zero_grad();
    Ok(ConverterStepLosses { discriminator: d_terms, generator: g_terms })
}

/// One teacher-forced update. Returns the loss before the update.
pub fn train_vocoder_step(
    net: &VocoderNet,
    store: &mut ParamStore,
    batch: &[&Segment],
    opt: &mut AdamState,
) -> Result<f64> {
    let (graph, loss) = teacher_forced_graph(net, store, batch)?;
    let value = graph.value(loss).item();
    check_finite(value, opt.step + 1)?;
    store.zero_grad();
    graph.backward(loss, store)?;
    opt.step(store)?;
    store.zero_grad();
    Ok(value)
}

fn rounded_adam(config: crate::nn::AdamConfig, store: &ParamStore, ids: Vec<crate::nn::ParamId>) -> Result<AdamState> {
    let mut opt = AdamState::new(config, store, ids)?;
    opt.round_to_f32 = true;
    Ok(opt)
}

/// Full converter training state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterTrainer {
    pub config: TrainConfig,
    pub pair: ConverterPair,
    pub opts: ConverterOptimizers,
    pub rng: ChaCha8Rng,
    /// Completed iterations.
    pub step: u64,
}

impl ConverterTrainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut pair = ConverterPair::new(config.converter_config(), &mut rng)?;
        pair.store.round_to_f32();
        pair.power_iterate(true);
        let opts = ConverterOptimizers {
            discriminator: rounded_adam(config.adam_converter, &pair.store, pair.discriminator_params())?,
            generator: rounded_adam(config.adam_converter, &pair.store, pair.generator_params())?,
        };
        Ok(Self { config, pair, opts, rng, step: 0 })
    }

    /// Samples fresh batches for both phases and runs one iteration.
    pub fn step(&mut self, corpus_a: &[Spectrogram], corpus_b: &[Spectrogram]) -> Result<ConverterStepLosses> {
        let (n, crop) = (self.config.batch_converter, self.config.crop_frames);
        let rng = &mut self.rng;
        let dx = sample_batch(corpus_a, n, crop, rng)?;
        let dy = sample_batch(corpus_b, n, crop, rng)?;
        let gx = sample_batch(corpus_a, n, crop, rng)?;
        let gy = sample_batch(corpus_b, n, crop, rng)?;
        let losses = train_converter_step(&mut self.pair, &mut self.opts, (&dx, &dy), (&gx, &gy), self.step + 1, rng)?;
        self.step += 1;
        Ok(losses)
    }

    fn power_names(&self) -> impl Iterator<Item = (String, usize, bool)> + '_ {
        let x = (0..self.pair.d_x.power.len()).map(|i| (format!("d_x.{i}"), i, true));
        x.chain((0..self.pair.d_y.power.len()).map(|i| (format!("d_y.{i}"), i, false)))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let power = self
            .power_names()
            .map(|(name, i, is_x)| {
                let d = if is_x { &self.pair.d_x } else { &self.pair.d_y };
                checkpoint::power_section(name, &d.power[i])
            })
            .collect();
        Checkpoint {
            kind: ModelKind::Converter,
            step: self.step,
            config: self.config.to_text(),
            rng: RngState::capture(&self.rng),
            params: checkpoint::store_grids(&self.pair.store),
            optimizers: vec![
                checkpoint::optimizer_section("discriminator", &self.opts.discriminator, &self.pair.store),
                checkpoint::optimizer_section("generator", &self.opts.generator, &self.pair.store),
            ],
            power,
        }
    }

    /// Overwrites this trainer's state with `cp`. The model built from
    /// `self.config` must match the checkpoint parameter for parameter.
    pub fn restore(&mut self, cp: &Checkpoint) -> Result<()> {
        cp.expect_kind(ModelKind::Converter)?;
        checkpoint::restore_store(&mut self.pair.store, &cp.params)?;
        let names: Vec<(String, usize, bool)> = self.power_names().collect();
        for (name, i, is_x) in names {
            let d = if is_x { &mut self.pair.d_x } else { &mut self.pair.d_y };
            checkpoint::restore_power(&mut d.power[i], cp.power_state(&name)?)?;
        }
        if cp.power.len() != self.pair.d_x.power.len() + self.pair.d_y.power.len() {
            return Err(Error::CheckpointShapeMismatch {
                name: "power iteration".into(),
                detail: format!("checkpoint has {} vectors", cp.power.len()),
            });
        }
        checkpoint::restore_optimizer(&mut self.opts.discriminator, cp.optimizer("discriminator")?, &self.pair.store)?;
        checkpoint::restore_optimizer(&mut self.opts.generator, cp.optimizer("generator")?, &self.pair.store)?;
        self.pair.refresh_sigmas();
        self.rng = cp.rng.restore();
        self.step = cp.step;
        Ok(())
    }

    /// Rebuilds a trainer from the configuration stored in `cp`.
    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        cp.expect_kind(ModelKind::Converter)?;
        let mut t = Self::new(TrainConfig::from_text(&cp.config)?)?;
        t.restore(cp)?;
        Ok(t)
    }
}

/// Per-frame training segments of every utterance, in corpus order.
pub fn vocoder_corpus(waves: &[Waveform]) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for w in waves {
        out.extend(segments(&stft(w)?, w)?);
    }
    Ok(out)
}

/// Full vocoder training state.
#[derive(Debug, Clone, PartialEq)]
pub struct VocoderTrainer {
    pub config: TrainConfig,
    pub store: ParamStore,
    pub net: VocoderNet,
    pub opt: AdamState,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

impl VocoderTrainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let net = VocoderNet::new(&mut store, config.vocoder_config(), &mut rng)?;
        store.round_to_f32();
        let opt = rounded_adam(config.adam_vocoder, &store, net.params())?;
        Ok(Self { config, store, net, opt, rng, step: 0 })
    }

    /// Draws `batch_vocoder` segments uniformly with replacement and updates.
    pub fn step(&mut self, corpus: &[Segment]) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::EmptyInput("vocoder corpus"));
        }
        let batch: Vec<&Segment> =
            (0..self.config.batch_vocoder).map(|_| &corpus[self.rng.random_range(0..corpus.len())]).collect();
        let loss = train_vocoder_step(&self.net, &mut self.store, &batch, &mut self.opt)?;
        self.step += 1;
        Ok(loss)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Vocoder,
            step: self.step,
            config: self.config.to_text(),
            rng: RngState::capture(&self.rng),
            params: checkpoint::store_grids(&self.store),
            optimizers: vec![checkpoint::optimizer_section("vocoder", &self.opt, &self.store)],
            power: Vec::new(),
        }
    }

    pub fn restore(&mut self, cp: &Checkpoint) -> Result<()> {
        cp.expect_kind(ModelKind::Vocoder)?;
        checkpoint::restore_store(&mut self.store, &cp.params)?;
        checkpoint::restore_optimizer(&mut self.opt, cp.optimizer("vocoder")?, &self.store)?;
        self.rng = cp.rng.restore();
        self.step = cp.step;
        Ok(())
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        cp.expect_kind(ModelKind::Vocoder)?;
        let mut t = Self::new(TrainConfig::from_text(&cp.config)?)?;
        t.restore(cp)?;
        Ok(t)
    }
}

fn due(step: u64, every: u64) -> bool {
    every > 0 && step % every == 0
}

/// Runs converter iterations until `config.steps`, writing one
/// `step<TAB>L_D<TAB>L_G` line per iteration. `save` receives a checkpoint
/// before the first iteration of a fresh run, every `checkpoint_every`
/// iterations and at the end. An error stops the loop without saving.
pub fn run_converter(
    trainer: &mut ConverterTrainer,
    corpus_a: &[Spectrogram],
    corpus_b: &[Spectrogram],
    log: &mut dyn Write,
    save: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<()> {
    if trainer.step == 0 {
        save(&trainer.checkpoint())?;
    }
    let mut saved = trainer.step;
    while trainer.step < trainer.config.steps {
        let l = trainer.step(corpus_a, corpus_b)?;
        writeln!(log, "{}\t{}\t{}", trainer.step, l.discriminator.total, l.generator.total)?;
        if due(trainer.step, trainer.config.checkpoint_every) {
            save(&trainer.checkpoint())?;
            saved = trainer.step;
        }
    }
    if saved != trainer.step {
        save(&trainer.checkpoint())?;
    }
    log.flush()?;
    Ok(())
}

/// Vocoder counterpart of [`run_converter`]; log lines are `step<TAB>L_W`.
pub fn run_vocoder(
    trainer: &mut VocoderTrainer,
    corpus: &[Segment],
    log: &mut dyn Write,
    save: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<()> {
    if trainer.step == 0 {
        save(&trainer.checkpoint())?;
    }
    let mut saved = trainer.step;
    while trainer.step < trainer.config.steps {
        let l = trainer.step(corpus)?;
        writeln!(log, "{}\t{}", trainer.step, l)?;
        if due(trainer.step, trainer.config.checkpoint_every) {
            save(&trainer.checkpoint())?;
            saved = trainer.step;
        }
    }
    if saved != trainer.step {
        save(&trainer.checkpoint())?;
    }
    log.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
