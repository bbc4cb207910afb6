//! Versioned binary archive of a training state.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SCYC" u32:version u8:kind u64:step str:config
//! [u8;32]:rng seed u64:rng stream u128:rng word position
//! u32:n  n × (str:name u32:rank u32×rank:shape f32×len:values)
//! u32:n  n × (str:name u64:step f64×4:alpha,beta1,beta2,eps u32:count
//!             count × (str:param f32×len:m f32×len:v))
//! u32:n  n × (str:name u64:iterations u32:len f32×len:u)
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8. Every grid is stored as
//! `f32`; trainers keep their state on the `f32` lattice so nothing is lost.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::nn::{AdamConfig, AdamState, ParamStore, PowerIterState};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SCYC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Converter,
    Vocoder,
}

impl ModelKind {
    fn code(self) -> u8 {
        match self {
            ModelKind::Converter => 0,
            ModelKind::Vocoder => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ModelKind::Converter),
            1 => Ok(ModelKind::Vocoder),
            _ => Err(Error::TruncatedCheckpoint),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Converter => "converter",
            ModelKind::Vocoder => "vocoder",
        })
    }
}

/// Position of a `ChaCha8Rng` stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSection {
    pub name: String,
    pub step: u64,
    pub config: AdamConfig,
    /// `(parameter name, first moment, second moment)`.
    pub moments: Vec<(String, Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSection {
    pub name: String,
    pub iterations: u64,
    pub u: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub step: u64,
    /// Configuration snapshot in `key = value` form.
    pub config: String,
    pub rng: RngState,
    pub params: Vec<Grid>,
    pub optimizers: Vec<OptimizerSection>,
    pub power: Vec<PowerSection>,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn shape_error(name: &str, detail: impl Into<String>) -> Error {
    Error::CheckpointShapeMismatch { name: name.to_string(), detail: detail.into() }
}

/// Grids for every parameter of `store`, in store order.
pub fn store_grids(store: &ParamStore) -> Vec<Grid> {
    store
        .iter()
        .map(|p| Grid { name: p.name.clone(), shape: p.value.shape().to_vec(), values: to_f32(p.value.data()) })
        .collect()
}

/// Copies `grids` into `store`. Every parameter must be present with the
/// same shape and no extra grids are allowed.
pub fn restore_store(store: &mut ParamStore, grids: &[Grid]) -> Result<()> {
    if let Some(p) = store.iter().find(|p| !grids.iter().any(|g| g.name == p.name)) {
        return Err(shape_error(&p.name, "missing from checkpoint"));
    }
    for g in grids {
        let id = store.id(&g.name).ok_or_else(|| shape_error(&g.name, "not part of the configured model"))?;
        let p = store.get_mut(id);
        if p.value.shape() != g.shape.as_slice() {
            return Err(shape_error(&g.name, format!("checkpoint {:?}, model {:?}", g.shape, p.value.shape())));
        }
        p.value.data_mut().copy_from_slice(&to_f64(&g.values));
    }
    Ok(())
}

pub fn optimizer_section(name: &str, opt: &AdamState, store: &ParamStore) -> OptimizerSection {
    OptimizerSection {
        name: name.to_string(),
        step: opt.step,
        config: opt.config,
        moments: opt
            .params
            .iter()
            .zip(opt.first_moment.iter().zip(&opt.second_moment))
            .map(|(id, (m, v))| (store.get(*id).name.clone(), to_f32(m), to_f32(v)))
            .collect(),
    }
}

pub fn restore_optimizer(opt: &mut AdamState, section: &OptimizerSection, store: &ParamStore) -> Result<()> {
    if section.moments.len() != opt.params.len() {
        return Err(shape_error(
            &section.name,
            format!("checkpoint has {} moment grids, model {}", section.moments.len(), opt.params.len()),
        ));
    }
    for (k, (name, m, v)) in section.moments.iter().enumerate() {
        let p = store.get(opt.params[k]);
        if *name != p.name {
            return Err(shape_error(name, format!("expected moments for {}", p.name)));
        }
        if m.len() != p.value.len() || v.len() != p.value.len() {
            return Err(shape_error(name, "moment length differs from parameter"));
        }
        opt.first_moment[k] = to_f64(m);
        opt.second_moment[k] = to_f64(v);
    }
    opt.step = section.step;
    opt.config = section.config;
    Ok(())
}

pub fn power_section(name: String, state: &PowerIterState) -> PowerSection {
    PowerSection { name, iterations: state.iteration_count, u: to_f32(&state.u) }
}

pub fn restore_power(state: &mut PowerIterState, section: &PowerSection) -> Result<()> {
    if section.u.len() != state.u.len() {
        return Err(shape_error(
            &section.name,
            format!("checkpoint {} rows, model {}", section.u.len(), state.u.len()),
        ));
    }
    state.u = to_f64(&section.u);
    state.iteration_count = section.iterations;
    Ok(())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("checkpoint section exceeds u32 length"));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::TruncatedCheckpoint);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::TruncatedCheckpoint)
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::TruncatedCheckpoint)?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.0.push(self.kind.code());
        w.u64(self.step);
        w.str(&self.config);
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());

        w.len(self.params.len());
        for g in &self.params {
            w.str(&g.name);
            w.len(g.shape.len());
            for &d in &g.shape {
                w.len(d);
            }
            w.f32s(&g.values);
        }
        w.len(self.optimizers.len());
        for o in &self.optimizers {
            w.str(&o.name);
            w.u64(o.step);
            for v in [o.config.alpha, o.config.beta1, o.config.beta2, o.config.epsilon] {
                w.f64(v);
            }
            w.len(o.moments.len());
            for (name, m, v) in &o.moments {
                w.str(name);
                w.len(m.len());
                w.f32s(m);
                w.f32s(v);
            }
        }
        w.len(self.power.len());
        for p in &self.power {
            w.str(&p.name);
            w.u64(p.iterations);
            w.len(p.u.len());
            w.f32s(&p.u);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        let mut r = Reader(&bytes[4..]);
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch { found: version, expected: VERSION });
        }
        let kind = ModelKind::from_code(r.take(1)?[0])?;
        let step = r.u64()?;
        let config = r.str()?;
        let rng = RngState { seed: r.array()?, stream: r.u64()?, word_pos: u128::from_le_bytes(r.array()?) };

        let n = r.len()?;
        let mut params = Vec::new();
        for _ in 0..n {
            let name = r.str()?;
            let rank = r.len()?;
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or(Error::TruncatedCheckpoint)?;
            params.push(Grid { name, shape, values: r.f32s(count)? });
        }
        let n = r.len()?;
        let mut optimizers = Vec::new();
        for _ in 0..n {
            let name = r.str()?;
            let step = r.u64()?;
            let config = AdamConfig { alpha: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, epsilon: r.f64()? };
            let count = r.len()?;
            let mut moments = Vec::new();
            for _ in 0..count {
                let pname = r.str()?;
                let len = r.len()?;
                moments.push((pname, r.f32s(len)?, r.f32s(len)?));
            }
            optimizers.push(OptimizerSection { name, step, config, moments });
        }
        let n = r.len()?;
        let mut power = Vec::new();
        for _ in 0..n {
            let name = r.str()?;
            let iterations = r.u64()?;
            let len = r.len()?;
            power.push(PowerSection { name, iterations, u: r.f32s(len)? });
        }
        if !r.0.is_empty() {
            return Err(Error::TruncatedCheckpoint);
        }
        Ok(Self { kind, step, config, rng, params, optimizers, power })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::CheckpointKind { expected: kind.to_string(), found: self.kind.to_string() });
        }
        Ok(())
    }

    pub fn optimizer(&self, name: &str) -> Result<&OptimizerSection> {
        self.optimizers.iter().find(|o| o.name == name).ok_or_else(|| shape_error(name, "optimizer state missing"))
    }

    pub fn power_state(&self, name: &str) -> Result<&PowerSection> {
        self.power.iter().find(|p| p.name == name).ok_or_else(|| shape_error(name, "power-iteration vector missing"))
    }
}
