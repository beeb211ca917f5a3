//! Pipeline configuration: a TOML file, `--set key=value` patches, then
//! dedicated command-line flags, later sources winning.

use std::fs;
use std::path::{Path, PathBuf};

use foildiff_core::aero::FlowCondition;
use foildiff_core::denoiser::{ConditionKind, DenoiserConfig};
use foildiff_core::diffusion::{GuidanceConfig, NoiseSchedule, ScheduleParams};
use foildiff_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("override `{key}` descends into `{segment}`, which is not a table")]
    NotATable { key: String, segment: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub checkpoint_every: usize,
    pub window: usize,
    /// Fraction of the dataset withheld from training.
    pub holdout: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            checkpoint_every: t.checkpoint_every,
            window: t.window,
            holdout: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub alpha_deg: f64,
    pub reynolds: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            alpha_deg: 0.0,
            reynolds: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningSection {
    pub kind: ConditionKind,
    /// Sampling target range in natural units.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub count: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { count: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub top_k: usize,
    pub bins: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { top_k: 5, bins: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub schedule: ScheduleParams,
    pub model: DenoiserConfig,
    pub train: TrainSection,
    pub guidance: GuidanceConfig,
    pub flow: FlowSection,
    pub conditioning: ConditioningSection,
    pub sample: SampleSection,
    pub evaluate: EvaluateSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            schedule: ScheduleParams::default(),
            model: DenoiserConfig::default(),
            train: TrainSection::default(),
            guidance: GuidanceConfig::default(),
            flow: FlowSection::default(),
            conditioning: ConditioningSection::default(),
            sample: SampleSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads `path` (defaults when `None`) and applies `key=value` patches,
    /// where `key` is a dotted path such as `train.steps` and `value` is a
    /// TOML value (bare words are taken as strings).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let label = path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<overrides>"));
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                toml::from_str::<toml::Table>(&text).map_err(|source| ConfigError::Parse {
                    path: p.to_path_buf(),
                    source,
                })?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|source| ConfigError::Parse { path: label, source })
    }

    pub fn flow(&self) -> Result<FlowCondition, ConfigError> {
        FlowCondition::from_degrees(self.flow.alpha_deg, self.flow.reynolds)
            .map_err(|e| ConfigError::Invalid(format!("flow: {e}")))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            uncond_drop_prob: self.guidance.uncond_drop_prob,
            seed: self.seed,
            checkpoint_every: t.checkpoint_every,
            window: t.window,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |what: &str, e: &dyn std::fmt::Display| ConfigError::Invalid(format!("{what}: {e}"));
        self.model.validate().map_err(|e| invalid("model", &e))?;
        NoiseSchedule::from_params(&self.schedule).map_err(|e| invalid("schedule", &e))?;
        self.guidance.validate().map_err(|e| invalid("guidance", &e))?;
        self.train_config().validate().map_err(|e| invalid("train", &e))?;
        self.flow()?;
        if !(0.0..1.0).contains(&self.train.holdout) {
            return Err(ConfigError::Invalid("train.holdout must lie in [0, 1)".into()));
        }
        if self.sample.count == 0 {
            return Err(ConfigError::Invalid("sample.count must be at least 1".into()));
        }
        if self.evaluate.bins == 0 {
            return Err(ConfigError::Invalid("evaluate.bins must be at least 1".into()));
        }
        let c = &self.conditioning;
        if [c.min, c.max].iter().flatten().any(|v| !v.is_finite()) {
            return Err(ConfigError::Invalid("conditioning range must be finite".into()));
        }
        if let (Some(lo), Some(hi)) = (c.min, c.max) {
            if lo > hi {
                return Err(ConfigError::Invalid("conditioning.min exceeds conditioning.max".into()));
            }
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(spec.into()));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()));

    let mut segments: Vec<&str> = key.split('.').collect();
    let last = segments.pop().unwrap_or(key);
    let mut node = table;
    for seg in segments {
        let entry = node
            .entry(seg)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| ConfigError::NotATable {
            key: key.into(),
            segment: seg.into(),
        })?;
    }
    node.insert(last.into(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = PipelineConfig::load(None, &[]).unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
        assert_eq!(c.train_config().learning_rate, 2e-4);
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let c = PipelineConfig::load(
            None,
            &[
                "train.steps=12".into(),
                "conditioning.kind=drag_coefficient".into(),
                "conditioning.min = 0.005".into(),
                "data_dir=some/where".into(),
                "schedule.beta_end=0.1".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.steps, 12);
        assert_eq!(c.conditioning.kind, ConditionKind::DragCoefficient);
        assert_eq!(c.conditioning.min, Some(0.005));
        assert_eq!(c.data_dir, PathBuf::from("some/where"));
        assert_eq!(c.schedule.beta_end, 0.1);
        assert_eq!(c.schedule.total_steps, 1000);
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(matches!(
            PipelineConfig::load(None, &["novalue".into()]),
            Err(ConfigError::BadOverride(_))
        ));
        assert!(matches!(
            PipelineConfig::load(None, &["seed=1".into(), "seed.x=2".into()]),
            Err(ConfigError::NotATable { .. })
        ));
        assert!(matches!(
            PipelineConfig::load(None, &["train.stepz=1".into()]),
            Err(ConfigError::Parse { .. })
        ));
        let mut c = PipelineConfig::default();
        c.conditioning.min = Some(2.0);
        c.conditioning.max = Some(1.0);
        assert!(c.validate().is_err());
        c = PipelineConfig::default();
        c.train.holdout = 1.0;
        assert!(c.validate().is_err());
    }
}
