//! Noise-prediction training with conditioning dropout and Adam.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{ModelCheckpoint, TrainingMetadata};
use crate::denoiser::{ConditionKind, ConditioningStats, Denoiser, DenoiserConfig, DenoiserError};
use crate::diffusion::{derive_seed, forward_sample, gaussian_vec, DiffusionError, NoiseSchedule, ScheduleParams};
use crate::geometry::{CanonicalSample, CANONICAL_POINTS};

/// Separates the batch-selection stream from the per-sample noise stream.
const BATCH_STREAM: u64 = 0x6261_7463_6821;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset holds {size} samples, fewer than the batch size {batch_size}")]
    DatasetTooSmall { size: usize, batch_size: usize },
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("{values} conditioning values for {samples} samples")]
    ValueCountMismatch { samples: usize, values: usize },
    #[error("non-finite conditioning value at sample {0}")]
    NonFiniteCondition(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

pub type Result<T> = core::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub uncond_drop_prob: f64,
    pub seed: u64,
    /// Interval between intermediate checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    /// Number of recent losses averaged into `TrainRecord::window_mean`.
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 16,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            uncond_drop_prob: 0.1,
            seed: 0,
            checkpoint_every: 0,
            window: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(TrainError::InvalidConfig("steps must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::InvalidConfig("moment decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(TrainError::InvalidConfig("epsilon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.uncond_drop_prob) {
            return Err(TrainError::InvalidConfig("drop probability must lie in [0, 1]"));
        }
        if self.window == 0 {
            return Err(TrainError::InvalidConfig("window must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// 1-based optimizer step.
    pub step: usize,
    pub loss: f64,
    pub window_mean: f64,
    /// Seconds since training started, as reported by the observer.
    pub elapsed: f64,
}

/// Receives progress from `train`. All methods default to no-ops.
pub trait TrainObserver {
    /// Wall time since training started; the core has no clock.
    fn elapsed(&self) -> f64 {
        0.0
    }

    fn on_record(&mut self, _record: &TrainRecord) {}

    fn on_checkpoint(&mut self, _checkpoint: &ModelCheckpoint) {}
}

impl TrainObserver for () {}

/// Samples with one conditioning value each (`values` is ignored for kind
/// `None`).
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub samples: &'a [CanonicalSample],
    pub kind: ConditionKind,
    pub values: &'a [f64],
}

impl TrainingData<'_> {
    pub fn unconditional(samples: &[CanonicalSample]) -> TrainingData<'_> {
        TrainingData {
            samples,
            kind: ConditionKind::None,
            values: &[],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kind == ConditionKind::None {
            return Ok(());
        }
        if self.values.len() != self.samples.len() {
            return Err(TrainError::ValueCountMismatch {
                samples: self.samples.len(),
                values: self.values.len(),
            });
        }
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(TrainError::NonFiniteCondition(i)),
            None => Ok(()),
        }
    }
}

/// 64-bit FNV-1a over the kind code, then every sample's flat values and
/// conditioning value as little-endian bits.
pub fn dataset_fingerprint(data: &TrainingData<'_>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&[data.kind.code()]);
    for (i, s) in data.samples.iter().enumerate() {
        for v in s.upper.iter().chain(&s.lower) {
            feed(&v.to_bits().to_le_bytes());
        }
        if data.kind != ConditionKind::None {
            feed(&data.values[i].to_bits().to_le_bytes());
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub loss: f64,
    /// Per sample, whether its condition was replaced by the null condition.
    pub dropped: Vec<bool>,
}

/// Mean squared error between drawn noise and its prediction over a batch.
///
/// Sample `i` uses a generator seeded with `derive_seed(seed, i)` and draws,
/// in order: `t` uniform in `[1, T]`, 200 unit-Gaussian noise values, and a
/// uniform `u` in `[0, 1)`; the condition is dropped when
/// `u < drop_prob`. When `grads` is given the loss gradient is added to it.
pub fn training_loss(
    model: &Denoiser,
    batch: &[&CanonicalSample],
    conditions: &[Option<f64>],
    schedule: &NoiseSchedule,
    drop_prob: f64,
    seed: u64,
    mut grads: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if conditions.len() != batch.len() {
        return Err(TrainError::ValueCountMismatch {
            samples: batch.len(),
            values: conditions.len(),
        });
    }
    let scale = 1.0 / (batch.len() * CANONICAL_POINTS) as f64;
    let mut loss = 0.0;
    let mut dropped = Vec::with_capacity(batch.len());
    for (i, (sample, cond)) in batch.iter().zip(conditions).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let t = rng.random_range(1..=schedule.total_steps());
        let eps = gaussian_vec(&mut rng, CANONICAL_POINTS);
        let drop = rng.random::<f64>() < drop_prob;
        dropped.push(drop);
        let condition = if drop { None } else { *cond };

        let y_t = forward_sample(&sample.to_flat(), t, &eps, schedule)?;
        let (out, cache) = model.forward(&y_t, t, condition)?;
        let mut d_out = vec![0.0; CANONICAL_POINTS];
        for ((d, o), e) in d_out.iter_mut().zip(&out).zip(&eps) {
            let r = o - e;
            loss += r * r * scale;
            *d = 2.0 * r * scale;
        }
        if let Some(g) = grads.as_deref_mut() {
            model.backward(&cache, &d_out, g)?;
        }
    }
    Ok(LossBreakdown { loss, dropped })
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(len: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    /// One update. Parameters are rounded to `f32` afterwards so the model in
    /// memory is exactly what a checkpoint stores.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.steps = self.steps.saturating_add(1);
        let c1 = 1.0 - libm::pow(self.beta1, self.steps as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.steps as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let p = params[i] - self.lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            params[i] = p as f32 as f64;
        }
    }
}

/// Trains a fresh denoiser (initialized from `config.seed`) for
/// `config.steps` steps. Each step draws `batch_size` distinct samples.
pub fn train(
    data: &TrainingData<'_>,
    config: &TrainConfig,
    denoiser_config: DenoiserConfig,
    schedule_params: &ScheduleParams,
    observer: &mut dyn TrainObserver,
) -> Result<ModelCheckpoint> {
    config.validate()?;
    data.validate()?;
    if data.samples.len() < config.batch_size {
        return Err(TrainError::DatasetTooSmall {
            size: data.samples.len(),
            batch_size: config.batch_size,
        });
    }
    let schedule = NoiseSchedule::from_params(schedule_params)?;
    let stats = if data.kind == ConditionKind::None {
        ConditioningStats::none()
    } else {
        ConditioningStats::from_values(data.kind, data.values)
    };
    let conditions: Vec<Option<f64>> = (0..data.samples.len())
        .map(|i| (data.kind != ConditionKind::None).then(|| stats.normalize(data.values[i])))
        .collect();

    let mut checkpoint = ModelCheckpoint {
        denoiser: Denoiser::new(denoiser_config, config.seed)?,
        schedule: *schedule_params,
        conditioning: stats,
        metadata: TrainingMetadata {
            steps: 0,
            seed: config.seed,
            dataset_fingerprint: dataset_fingerprint(data),
        },
    };
    let count = checkpoint.denoiser.parameter_count();
    let mut adam = Adam::new(count, config);
    let mut grads = vec![0.0; count];
    let mut window = Vec::with_capacity(config.window);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, BATCH_STREAM));

    for step in 1..=config.steps {
        let picks = index::sample(&mut batch_rng, data.samples.len(), config.batch_size);
        let batch: Vec<&CanonicalSample> = picks.iter().map(|i| &data.samples[i]).collect();
        let conds: Vec<Option<f64>> = picks.iter().map(|i| conditions[i]).collect();

        grads.fill(0.0);
        let out = training_loss(
            &checkpoint.denoiser,
            &batch,
            &conds,
            &schedule,
            config.uncond_drop_prob,
            derive_seed(config.seed, step as u64),
            Some(&mut grads),
        )?;
        if !out.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteLoss { step, loss: out.loss });
        }
        adam.step(checkpoint.denoiser.params_mut(), &grads);
        checkpoint.metadata.steps = step as u64;

        if window.len() == config.window {
            window.remove(0);
        }
        window.push(out.loss);
        observer.on_record(&TrainRecord {
            step,
            loss: out.loss,
            window_mean: window.iter().sum::<f64>() / window.len() as f64,
            elapsed: observer.elapsed(),
        });
        if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step < config.steps {
            observer.on_checkpoint(&checkpoint);
        }
    }
    Ok(checkpoint)
}
