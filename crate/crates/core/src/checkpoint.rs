//! Trained-model container and its binary encoding.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic            8 bytes  "AFDIFFCK"
//! version          u32      1
//! base_width       u32
//! depth            u32
//! time_embed_dim   u32
//! cond_embed_dim   u32
//! total_steps      u32
//! beta_start       f64
//! beta_end         f64
//! condition kind   u8       0 none, 1 lift, 2 drag, 3 thickness, 4 camber
//! condition mean   f64
//! condition std    f64
//! train steps      u64
//! train seed       u64
//! dataset hash     u64      FNV-1a over the training set
//! tensor count     u32
//! per tensor:
//!   name length    u16
//!   name           UTF-8 bytes
//!   rank           u8
//!   dims           u32 x rank
//!   values         f32 x product(dims)
//! ```
//!
//! Tensors appear in the model's storage order and must match the layout
//! implied by the config.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::{
    ConditionKind, ConditioningSpec, ConditioningStats, Denoiser, DenoiserConfig, DenoiserError,
};
use crate::diffusion::{NoisePredictor, ScheduleParams};
use crate::geometry::CANONICAL_POINTS;

pub const MAGIC: &[u8; 8] = b"AFDIFFCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("unknown condition kind code {0}")]
    UnknownConditionKind(u8),
    #[error("tensor name is not UTF-8")]
    InvalidName,
    #[error("tensor {index} is `{found}` {found_shape:?}, expected `{expected}` {expected_shape:?}")]
    LayoutMismatch {
        index: usize,
        expected: String,
        expected_shape: Vec<usize>,
        found: String,
        found_shape: Vec<usize>,
    },
    #[error("checkpoint holds {found} tensors, config implies {expected}")]
    TensorCount { expected: usize, found: usize },
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub steps: u64,
    pub seed: u64,
    pub dataset_fingerprint: u64,
}

#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub denoiser: Denoiser,
    pub schedule: ScheduleParams,
    pub conditioning: ConditioningStats,
    pub metadata: TrainingMetadata,
}

impl ModelCheckpoint {
    /// Spec for a raw target (`None` for the null condition).
    pub fn spec(&self, raw: Option<f64>) -> ConditioningSpec {
        match raw {
            Some(v) if self.conditioning.kind != ConditionKind::None => self.conditioning.spec(v),
            _ => ConditioningSpec::none(),
        }
    }

    /// `predict_noise` on the wrapped model, refusing specs of another kind.
    pub fn predict_noise(&self, y_t: &[f64], t: usize, spec: &ConditioningSpec) -> Result<Vec<f64>, DenoiserError> {
        if spec.kind != ConditionKind::None && spec.kind != self.conditioning.kind {
            return Err(DenoiserError::ConfigMismatch(
                "conditioning kind differs from the trained kind",
            ));
        }
        self.denoiser.predict_noise(y_t, t, spec)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.denoiser.config();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        for v in [cfg.base_width, cfg.depth, cfg.time_embed_dim, cfg.cond_embed_dim] {
            put_u32(&mut out, v as u32);
        }
        put_u32(&mut out, self.schedule.total_steps as u32);
        out.extend_from_slice(&self.schedule.beta_start.to_le_bytes());
        out.extend_from_slice(&self.schedule.beta_end.to_le_bytes());
        out.push(self.conditioning.kind.code());
        out.extend_from_slice(&self.conditioning.mean.to_le_bytes());
        out.extend_from_slice(&self.conditioning.std.to_le_bytes());
        for v in [
            self.metadata.steps,
            self.metadata.seed,
            self.metadata.dataset_fingerprint,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let params = self.denoiser.params();
        put_u32(&mut out, self.denoiser.tensors().len() as u32);
        for t in self.denoiser.tensors() {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                put_u32(&mut out, *d as u32);
            }
            for v in &params[t.range()] {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let config = DenoiserConfig {
            base_width: r.u32()? as usize,
            depth: r.u32()? as usize,
            time_embed_dim: r.u32()? as usize,
            cond_embed_dim: r.u32()? as usize,
        };
        let schedule = ScheduleParams {
            total_steps: r.u32()? as usize,
            beta_start: r.f64()?,
            beta_end: r.f64()?,
        };
        let code = r.u8()?;
        let kind = ConditionKind::from_code(code).ok_or(CheckpointError::UnknownConditionKind(code))?;
        let conditioning = ConditioningStats {
            kind,
            mean: r.f64()?,
            std: r.f64()?,
        };
        let metadata = TrainingMetadata {
            steps: r.u64()?,
            seed: r.u64()?,
            dataset_fingerprint: r.u64()?,
        };

        let layout = Denoiser::layout(&config)?;
        let count = r.u32()? as usize;
        if count != layout.len() {
            return Err(CheckpointError::TensorCount {
                expected: layout.len(),
                found: count,
            });
        }
        let total: usize = layout.iter().map(|t| t.len()).sum();
        let mut params = vec![0.0; total];
        for (index, expected) in layout.iter().enumerate() {
            let name_len = r.u16()? as usize;
            let name = core::str::from_utf8(r.take(name_len)?).map_err(|_| CheckpointError::InvalidName)?;
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            if name != expected.name || shape != expected.shape {
                return Err(CheckpointError::LayoutMismatch {
                    index,
                    expected: expected.name.clone(),
                    expected_shape: expected.shape.clone(),
                    found: name.into(),
                    found_shape: shape,
                });
            }
            for v in &mut params[expected.range()] {
                *v = f32::from_le_bytes(r.array()?) as f64;
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Self {
            denoiser: Denoiser::from_params(config, params)?,
            schedule,
            conditioning,
            metadata,
        })
    }
}

impl NoisePredictor for ModelCheckpoint {
    fn schedule_params(&self) -> ScheduleParams {
        self.schedule
    }

    fn predict(&self, y_t: &[f64], t: usize, condition: Option<f64>) -> Vec<f64> {
        // Shapes and finiteness are checked by the sampler; a failure here
        // surfaces as non-finite output.
        self.denoiser
            .forward(y_t, t, condition)
            .map(|(out, _)| out)
            .unwrap_or_else(|_| vec![f64::NAN; CANONICAL_POINTS])
    }
}

impl NoisePredictor for Denoiser {
    fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams::default()
    }

    fn predict(&self, y_t: &[f64], t: usize, condition: Option<f64>) -> Vec<f64> {
        self.forward(y_t, t, condition)
            .map(|(out, _)| out)
            .unwrap_or_else(|_| vec![f64::NAN; CANONICAL_POINTS])
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkpoint() -> ModelCheckpoint {
        let config = DenoiserConfig {
            base_width: 4,
            depth: 2,
            time_embed_dim: 4,
            cond_embed_dim: 4,
        };
        ModelCheckpoint {
            denoiser: Denoiser::new(config, 3).unwrap(),
            schedule: ScheduleParams {
                total_steps: 50,
                beta_start: 1e-4,
                beta_end: 0.05,
            },
            conditioning: ConditioningStats {
                kind: ConditionKind::DragCoefficient,
                mean: 0.0123,
                std: 0.0011,
            },
            metadata: TrainingMetadata {
                steps: 500,
                seed: 42,
                dataset_fingerprint: 0xdead_beef,
            },
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = checkpoint();
        let bytes = c.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.denoiser.params(), c.denoiser.params());
        assert_eq!(back.schedule, c.schedule);
        assert_eq!(back.conditioning, c.conditioning);
        assert_eq!(back.metadata, c.metadata);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = checkpoint().to_bytes();
        assert_eq!(ModelCheckpoint::from_bytes(b"NOTACKPT").unwrap_err(), CheckpointError::BadMagic);
        assert_eq!(
            ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err(),
            CheckpointError::Truncated
        );
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(ModelCheckpoint::from_bytes(&extra).unwrap_err(), CheckpointError::TrailingBytes(1));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert_eq!(ModelCheckpoint::from_bytes(&v2).unwrap_err(), CheckpointError::UnsupportedVersion(2));
        let mut kind = bytes.clone();
        kind[8 + 4 + 16 + 4 + 16] = 9;
        assert_eq!(
            ModelCheckpoint::from_bytes(&kind).unwrap_err(),
            CheckpointError::UnknownConditionKind(9)
        );
        // Claim a wider model than the tensors hold.
        let mut wide = bytes;
        wide[12] = 8;
        assert!(matches!(
            ModelCheckpoint::from_bytes(&wide).unwrap_err(),
            CheckpointError::LayoutMismatch { .. }
        ));
    }

    #[test]
    fn foreign_kind_is_refused() {
        let c = checkpoint();
        let spec = ConditioningSpec::new(ConditionKind::MaxCamber, 0.02, 0.0);
        assert!(c.predict_noise(&[0.0; 200], 3, &spec).is_err());
        assert!(c.predict_noise(&[0.0; 200], 3, &c.spec(Some(0.012))).is_ok());
        assert!(c.predict_noise(&[0.0; 200], 3, &c.spec(None)).is_ok());
    }
}
