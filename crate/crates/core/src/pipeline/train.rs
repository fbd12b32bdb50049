//! Training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::prepare::{prepare_with, Sample};
use super::sequence::{Sequence, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::evsim::SimConfig;
use crate::loss::{total_loss, LossWeights};
use crate::nn::{save_checkpoint, Architecture, Mode, ModelParams, Network};
use crate::optim::{Adam, AdamConfig};
use crate::qtcodec::{BitBudget, CodecConfig};

pub const MIN_CROP: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Bit budgets; every sequence is degraded at each of them.
    pub budgets: Vec<u64>,
    pub crop: usize,
    pub batch: usize,
    pub iterations: usize,
    pub seed: u64,
    pub sim: SimConfig,
    pub loss: LossWeights,
    pub adam: AdamConfig,
    pub codec: CodecConfig,
    pub fps: f64,
    /// Write an intermediate checkpoint every this many iterations (0 = only at the end).
    pub checkpoint_every: usize,
    /// CSV file receiving `iteration,loss` rows.
    pub log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            budgets: vec![1000, 2000, 4000],
            crop: 64,
            batch: 8,
            iterations: 1000,
            seed: 0,
            sim: SimConfig::default(),
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
            codec: CodecConfig::default(),
            fps: DEFAULT_FPS,
            checkpoint_every: 0,
            log: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
}

impl TrainConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unlisted keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "budgets" => {
                    c.budgets = v
                        .split(',')
                        .map(|b| parse_num(key, b.trim()))
                        .collect::<Result<_>>()?
                }
                "crop" => c.crop = parse_num(key, v)?,
                "batch" => c.batch = parse_num(key, v)?,
                "iterations" => c.iterations = parse_num(key, v)?,
                "seed" => c.seed = parse_num(key, v)?,
                "threshold" => c.sim.threshold = parse_num(key, v)?,
                "log_eps" => c.sim.log_eps = parse_num(key, v)?,
                "lambda_fid" => c.loss.lambda_fid = parse_num(key, v)?,
                "lambda_tv" => c.loss.lambda_tv = parse_num(key, v)?,
                "lr" => c.adam.lr = parse_num(key, v)?,
                "beta1" => c.adam.beta1 = parse_num(key, v)?,
                "beta2" => c.adam.beta2 = parse_num(key, v)?,
                "adam_eps" => c.adam.eps = parse_num(key, v)?,
                "roi_weight" => c.codec.roi_weight = parse_num(key, v)?,
                "fps" => c.fps = parse_num(key, v)?,
                "checkpoint_every" => c.checkpoint_every = parse_num(key, v)?,
                "log" => c.log = Some(PathBuf::from(v)),
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() {
            return Err(Error::Config("at least one budget is required".into()));
        }
        for &b in &self.budgets {
            BitBudget::new(b)?;
        }
        if self.crop < MIN_CROP {
            return Err(Error::Config(format!("crop must be at least {MIN_CROP}, got {}", self.crop)));
        }
        if self.batch == 0 || self.iterations == 0 {
            return Err(Error::Config("batch and iterations must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0 && (0.0..1.0).contains(&self.adam.beta1) && (0.0..1.0).contains(&self.adam.beta2)) {
            return Err(Error::Config(format!("invalid Adam settings {:?}", self.adam)));
        }
        self.sim.validate()?;
        self.loss.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f64>,
    pub optimizer: Adam<f64>,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
}

/// Degrades every sequence at every configured budget.
pub fn build_dataset(config: &TrainConfig, sequences: &[Sequence]) -> Result<Vec<Sample>> {
    if sequences.is_empty() {
        return Err(Error::Config("no training sequences".into()));
    }
    let mut samples = Vec::new();
    for seq in sequences {
        for &b in &config.budgets {
            samples.extend(prepare_with(seq, BitBudget::new(b)?, config.sim, config.codec)?);
        }
    }
    if samples.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    Ok(samples)
}

/// Trains from a fresh model. When `out` is given the final checkpoint
/// (with optimizer state) is written there, plus intermediate ones every
/// `checkpoint_every` iterations.
pub fn train(config: &TrainConfig, sequences: &[Sequence], out: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let samples = build_dataset(config, sequences)?;
    let params = ModelParams::init(Architecture::default(), config.seed);
    train_on_samples(config, &samples, params, out)
}

pub fn train_on_samples(
    config: &TrainConfig,
    samples: &[Sample],
    params: ModelParams<f64>,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    for s in samples {
        let (_, h, w) = s.input.shape();
        if h < config.crop || w < config.crop {
            return Err(Error::Config(format!("crop {} larger than {h}x{w} frame", config.crop)));
        }
        if s.target.is_none() {
            return Err(Error::Config("training sample without ground truth".into()));
        }
    }
    if samples.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut net = Network::new(params);
    let mut opt = Adam::new(config.adam);
    let mut losses = Vec::with_capacity(config.iterations);
    let mut log = String::from("iteration,loss\n");

    for iteration in 1..=config.iterations {
        let mut inputs = Vec::with_capacity(config.batch);
        let mut crops = Vec::with_capacity(config.batch);
        for _ in 0..config.batch {
            let s = &samples[rng.gen_range(0..samples.len())];
            let (_, h, w) = s.input.shape();
            let y0 = rng.gen_range(0..=h - config.crop);
            let x0 = rng.gen_range(0..=w - config.crop);
            let c = s.crop(y0, x0, config.crop, config.crop)?;
            inputs.push(c.input.clone());
            crops.push(c);
        }
        let outputs = net.forward(&inputs, Mode::Train)?;
        let mut batch_loss = 0.0;
        let mut grads = Vec::with_capacity(outputs.len());
        for (r, c) in outputs.iter().zip(&crops) {
            let target = c.target.as_ref().expect("checked above");
            let v = total_loss(target, r, &c.ebar, config.loss)?;
            batch_loss += v.total;
            grads.push(v.grad);
        }
        if !batch_loss.is_finite() {
            return Err(Error::NonFinite { iteration, loss: batch_loss });
        }
        let g = net.backward(&grads)?;
        net.clear_cache();
        opt.step_model(&mut net.params, &g)?;
        losses.push(batch_loss);
        let _ = writeln!(log, "{iteration},{batch_loss}");

        if let Some(path) = out {
            if config.checkpoint_every > 0 && iteration % config.checkpoint_every == 0 && iteration < config.iterations {
                save_checkpoint(&net.params, Some(&opt), path)?;
            }
        }
    }

    if let Some(path) = out {
        save_checkpoint(&net.params, Some(&opt), path)?;
    }
    if let Some(path) = &config.log {
        fs::write(path, &log).map_err(|e| Error::io(path, e))?;
    }
    Ok(TrainOutcome { params: net.params, optimizer: opt, losses })
}
