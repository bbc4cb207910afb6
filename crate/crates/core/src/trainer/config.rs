//! Training configuration and its `key = value` text form.

use std::fmt::Write as _;

use crate::converter::ConverterConfig;
use crate::nn::AdamConfig;
use crate::vocoder::VocoderConfig;
use crate::{Error, Result};

/// Everything a training run depends on. Defaults are the full-size settings;
/// `steps` has no meaningful default and starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub crop_frames: usize,
    pub trim_frames: usize,
    pub batch_converter: usize,
    pub batch_vocoder: usize,
    pub adam_converter: AdamConfig,
    pub adam_vocoder: AdamConfig,
    pub lambda_cy: f64,
    pub lambda_id: f64,
    pub margin: f64,
    pub seed: u64,
    pub steps: u64,
    /// Steps between checkpoints; 0 writes only the initial and final ones.
    pub checkpoint_every: u64,
    pub channels: usize,
    pub n_g: usize,
    pub n_d: usize,
    pub kernel: usize,
    pub noise_sigma: f64,
    pub vocoder_hidden: usize,
    pub upsample_widths: [usize; 3],
    pub head_hidden: usize,
}

/// Default seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 20190;

impl Default for TrainConfig {
    fn default() -> Self {
        let c = ConverterConfig::default();
        let v = VocoderConfig::default();
        Self {
            crop_frames: c.crop_frames,
            trim_frames: c.trim_frames,
            batch_converter: 64,
            batch_vocoder: 160,
            adam_converter: AdamConfig::new(2e-4, 0.5, 0.999),
            adam_vocoder: AdamConfig::new(1e-4, 0.5, 0.999),
            lambda_cy: c.lambda_cy,
            lambda_id: c.lambda_id,
            margin: c.margin,
            seed: DEFAULT_SEED,
            steps: 0,
            checkpoint_every: 0,
            channels: c.channels,
            n_g: c.n_g,
            n_d: c.n_d,
            kernel: c.kernel,
            noise_sigma: c.noise_sigma,
            vocoder_hidden: v.hidden,
            upsample_widths: v.upsample_widths,
            head_hidden: v.head_hidden,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "crop_frames",
    "trim_frames",
    "batch_converter",
    "batch_vocoder",
    "adam_converter",
    "adam_vocoder",
    "lambda_cy",
    "lambda_id",
    "margin",
    "seed",
    "steps",
    "checkpoint_every",
    "channels",
    "n_g",
    "n_d",
    "kernel",
    "noise_sigma",
    "vocoder_hidden",
    "upsample_widths",
    "head_hidden",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {value:?}")))
}

fn parse_list<T: std::str::FromStr + Copy, const N: usize>(key: &str, value: &str) -> Result<[T; N]> {
    let items: Vec<T> = value.split(',').map(|v| parse(key, v)).collect::<Result<_>>()?;
    items.try_into().map_err(|_| Error::InvalidConfig(format!("{key} needs {N} comma-separated values, got {value:?}")))
}

fn parse_adam(key: &str, value: &str) -> Result<AdamConfig> {
    let [a, b1, b2] = parse_list::<f64, 3>(key, value)?;
    Ok(AdamConfig::new(a, b1, b2))
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
/// Returns `(line number, key, value)` triples.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl TrainConfig {
    /// Sets one key; unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "crop_frames" => self.crop_frames = parse(key, value)?,
            "trim_frames" => self.trim_frames = parse(key, value)?,
            "batch_converter" => self.batch_converter = parse(key, value)?,
            "batch_vocoder" => self.batch_vocoder = parse(key, value)?,
            "adam_converter" => self.adam_converter = parse_adam(key, value)?,
            "adam_vocoder" => self.adam_vocoder = parse_adam(key, value)?,
            "lambda_cy" => self.lambda_cy = parse(key, value)?,
            "lambda_id" => self.lambda_id = parse(key, value)?,
            "margin" => self.margin = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "n_g" => self.n_g = parse(key, value)?,
            "n_d" => self.n_d = parse(key, value)?,
            "kernel" => self.kernel = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "vocoder_hidden" => self.vocoder_hidden = parse(key, value)?,
            "upsample_widths" => self.upsample_widths = parse_list(key, value)?,
            "head_hidden" => self.head_hidden = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a whole configuration file on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (line, k, v) in parse_lines(text)? {
            cfg.set(&k, &v).map_err(|e| match e {
                Error::InvalidConfig(m) => Error::InvalidConfig(format!("line {line}: {m}")),
                e => e,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `from_text(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let adam = |a: &AdamConfig| format!("{}, {}, {}", a.alpha, a.beta1, a.beta2);
        let w = self.upsample_widths;
        let values = [
            self.crop_frames.to_string(),
            self.trim_frames.to_string(),
            self.batch_converter.to_string(),
            self.batch_vocoder.to_string(),
            adam(&self.adam_converter),
            adam(&self.adam_vocoder),
            self.lambda_cy.to_string(),
            self.lambda_id.to_string(),
            self.margin.to_string(),
            self.seed.to_string(),
            self.steps.to_string(),
            self.checkpoint_every.to_string(),
            self.channels.to_string(),
            self.n_g.to_string(),
            self.n_d.to_string(),
            self.kernel.to_string(),
            self.noise_sigma.to_string(),
            self.vocoder_hidden.to_string(),
            format!("{}, {}, {}", w[0], w[1], w[2]),
            self.head_hidden.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_converter == 0 || self.batch_vocoder == 0 {
            return bad("batch sizes must be positive");
        }
        for a in [&self.adam_converter, &self.adam_vocoder] {
            a.validate()?;
            if !(a.alpha > 0.0) {
                return bad("learning rates must be positive");
            }
        }
        self.converter_config().validate()?;
        self.vocoder_config().validate()
    }

    pub fn converter_config(&self) -> ConverterConfig {
        ConverterConfig {
            channels: self.channels,
            n_g: self.n_g,
            n_d: self.n_d,
            kernel: self.kernel,
            noise_sigma: self.noise_sigma,
            crop_frames: self.crop_frames,
            trim_frames: self.trim_frames,
            lambda_cy: self.lambda_cy,
            lambda_id: self.lambda_id,
            margin: self.margin,
            ..ConverterConfig::default()
        }
    }

    pub fn vocoder_config(&self) -> VocoderConfig {
        VocoderConfig {
            hidden: self.vocoder_hidden,
            upsample_widths: self.upsample_widths,
            head_hidden: self.head_hidden,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.crop_frames, c.trim_frames, c.batch_converter, c.batch_vocoder), (160, 16, 64, 160));
        assert_eq!(c.adam_converter, AdamConfig::new(2e-4, 0.5, 0.999));
        assert_eq!(c.adam_vocoder, AdamConfig::new(1e-4, 0.5, 0.999));
        assert_eq!((c.lambda_cy, c.lambda_id, c.margin), (10.0, 1.0, 0.5));
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.set("adam_vocoder", "3e-4, 0.9, 0.99").unwrap();
        c.set("upsample_widths", "16,32,64").unwrap();
        c.seed = 7;
        assert_eq!(TrainConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = TrainConfig::from_text("# toy\n\nsteps = 12  # short\nn_g=2\n").unwrap();
        assert_eq!((c.steps, c.n_g), (12, 2));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = TrainConfig::from_text("steps = 1\nlearning_rate = 3\n").unwrap_err().to_string();
        assert!(e.contains("learning_rate") && e.contains("line 2"), "{e}");
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "crop_frames = 32",
            "adam_converter = 0, 0.5, 0.999",
            "adam_converter = 1e-4, 0.5",
            "batch_vocoder = 0",
            "steps = -1",
            "no equals sign",
        ] {
            assert!(TrainConfig::from_text(text).is_err(), "{text}");
        }
    }
}
