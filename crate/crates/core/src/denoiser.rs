//! Conditional 1D U-Net noise predictor.
//!
//! The two surface channels (length 100, zero-padded to a multiple of
//! `2^depth`) pass through a convolutional encoder/decoder with skip
//! connections. A sinusoidal timestep code and a conditioning embedding are
//! fused by a bilinear layer into one context vector, which every residual
//! block projects to its width and adds to its activations.

use alloc::vec;
use alloc::vec::Vec;
use alloc::format;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CANONICAL_POINTS, SURFACE_POINTS};
use crate::nn::{
    relu, relu_backward, silu, silu_backward, upsample, upsample_backward, Bilinear, Conv1d,
    GroupNorm, Init, Linear, NormCache, ParamBuilder, ResBlock, ResCache,
};
pub use crate::nn::TensorInfo;

const CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenoiserError {
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("conditioning value is missing or not finite")]
    NonFiniteInput,
    #[error("embedding width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = core::result::Result<T, DenoiserError>;

/// The quantity a model is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    #[serde(alias = "cl")]
    LiftCoefficient,
    #[serde(alias = "cd")]
    DragCoefficient,
    #[serde(alias = "thickness")]
    MaxThickness,
    #[serde(alias = "camber")]
    MaxCamber,
    #[default]
    None,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 5] = [
        Self::LiftCoefficient,
        Self::DragCoefficient,
        Self::MaxThickness,
        Self::MaxCamber,
        Self::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LiftCoefficient => "lift_coefficient",
            Self::DragCoefficient => "drag_coefficient",
            Self::MaxThickness => "max_thickness",
            Self::MaxCamber => "max_camber",
            Self::None => "none",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Self::None => 0,
            Self::LiftCoefficient => 1,
            Self::DragCoefficient => 2,
            Self::MaxThickness => 3,
            Self::MaxCamber => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown condition kind `{0}`")]
pub struct UnknownConditionKind(pub alloc::string::String);

impl FromStr for ConditionKind {
    type Err = UnknownConditionKind;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Ok(match s {
            "lift_coefficient" | "cl" => Self::LiftCoefficient,
            "drag_coefficient" | "cd" => Self::DragCoefficient,
            "max_thickness" | "thickness" => Self::MaxThickness,
            "max_camber" | "camber" => Self::MaxCamber,
            "none" => Self::None,
            other => return Err(UnknownConditionKind(other.into())),
        })
    }
}

/// Training-set statistics used to z-score a conditioning quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningStats {
    pub kind: ConditionKind,
    pub mean: f64,
    pub std: f64,
}

impl ConditioningStats {
    pub fn none() -> Self {
        Self {
            kind: ConditionKind::None,
            mean: 0.0,
            std: 1.0,
        }
    }

    /// Mean and population standard deviation of `values`; a zero spread is
    /// replaced by 1 so normalization stays finite.
    pub fn from_values(kind: ConditionKind, values: &[f64]) -> Self {
        if kind == ConditionKind::None || values.is_empty() {
            return Self { kind, ..Self::none() };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        Self {
            kind,
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    /// The spec for a raw target of this kind.
    pub fn spec(&self, raw: f64) -> ConditioningSpec {
        ConditioningSpec::new(self.kind, raw, self.normalize(raw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningSpec {
    pub kind: ConditionKind,
    pub raw_value: Option<f64>,
    pub normalized_value: Option<f64>,
}

impl ConditioningSpec {
    pub fn none() -> Self {
        Self {
            kind: ConditionKind::None,
            raw_value: None,
            normalized_value: None,
        }
    }

    pub fn new(kind: ConditionKind, raw_value: f64, normalized_value: f64) -> Self {
        if kind == ConditionKind::None {
            return Self::none();
        }
        Self {
            kind,
            raw_value: Some(raw_value),
            normalized_value: Some(normalized_value),
        }
    }

    /// The normalized value fed to the network, `None` for the null condition.
    pub fn value(&self) -> Result<Option<f64>> {
        match (self.kind, self.normalized_value) {
            (ConditionKind::None, _) => Ok(None),
            (_, Some(v)) if v.is_finite() => Ok(Some(v)),
            _ => Err(DenoiserError::NonFiniteInput),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub base_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            depth: 3,
            time_embed_dim: 64,
            cond_embed_dim: 64,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 6 {
            return Err(DenoiserError::InvalidConfig("depth must be in 1..=6"));
        }
        if self.base_width == 0 || self.base_width > 4096 {
            return Err(DenoiserError::InvalidConfig("base_width must be in 1..=4096"));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(DenoiserError::InvalidConfig(
                "time_embed_dim must be positive and even",
            ));
        }
        if self.cond_embed_dim == 0 {
            return Err(DenoiserError::InvalidConfig("cond_embed_dim must be positive"));
        }
        Ok(())
    }

    /// Internal signal length: 100 rounded up to a multiple of `2^depth`.
    pub fn padded_len(&self) -> usize {
        let m = 1usize << self.depth;
        SURFACE_POINTS.div_ceil(m) * m
    }

    fn width(&self, level: usize) -> usize {
        self.base_width << level
    }
}

/// Sinusoidal code of `t`: entries `2i` and `2i + 1` are `sin(t f_i)` and
/// `cos(t f_i)` with `f_i = 10000^(-i / (dim / 2))`.
pub fn sinusoidal_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = libm::exp(-libm::log(10_000.0) * i as f64 / half as f64);
        out.push(libm::sin(t * freq));
        out.push(libm::cos(t * freq));
    }
    out
}

#[derive(Debug, Clone)]
struct Net {
    time: Linear,
    cond1: Linear,
    cond2: Linear,
    null: usize,
    fuse: Bilinear,
    input: Conv1d,
    encoder: Vec<ResBlock>,
    down: Vec<Conv1d>,
    middle: ResBlock,
    decoder: Vec<ResBlock>,
    out_norm: GroupNorm,
    out_conv: Conv1d,
}

impl Net {
    fn build(config: &DenoiserConfig) -> (Self, ParamBuilder) {
        let mut pb = ParamBuilder::default();
        let (dt, dc) = (config.time_embed_dim, config.cond_embed_dim);
        let time = Linear::new(&mut pb, "time.linear", dt, dt);
        let cond1 = Linear::new(&mut pb, "condition.linear1", 1, dc);
        let cond2 = Linear::new(&mut pb, "condition.linear2", dc, dc);
        let null = pb.add(
            "condition.null".into(),
            &[dc],
            Init::Uniform(1.0 / libm::sqrt(dc as f64)),
        );
        let fuse = Bilinear::new(&mut pb, "fusion", dt, dc, dt);
        let input = Conv1d::new(&mut pb, "input", CHANNELS, config.width(0), 3, 1);
        let mut encoder = Vec::new();
        let mut down = Vec::new();
        for l in 0..config.depth {
            let w = config.width(l);
            encoder.push(ResBlock::new(&mut pb, &format!("encoder.{l}"), w, w, dt));
            down.push(Conv1d::new(&mut pb, &format!("downsample.{l}"), w, config.width(l + 1), 3, 2));
        }
        let wd = config.width(config.depth);
        let middle = ResBlock::new(&mut pb, "middle", wd, wd, dt);
        let mut decoder = Vec::new();
        for l in (0..config.depth).rev() {
            let cin = config.width(l + 1) + config.width(l);
            decoder.push(ResBlock::new(&mut pb, &format!("decoder.{l}"), cin, config.width(l), dt));
        }
        let out_norm = GroupNorm::new(&mut pb, "output.norm", config.width(0));
        let out_conv = Conv1d::new(&mut pb, "output.conv", config.width(0), CHANNELS, 3, 1);
        let net = Self {
            time,
            cond1,
            cond2,
            null,
            fuse,
            input,
            encoder,
            down,
            middle,
            decoder,
            out_norm,
            out_conv,
        };
        (net, pb)
    }
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    t_code: Vec<f64>,
    t_pre: Vec<f64>,
    temb: Vec<f64>,
    cond: Option<(f64, Vec<f64>, Vec<f64>)>,
    cemb: Vec<f64>,
    ctx: Vec<f64>,
    input: Vec<f64>,
    encoder: Vec<ResCache>,
    skips: Vec<Vec<f64>>,
    middle: ResCache,
    decoder: Vec<ResCache>,
    out_norm: NormCache,
    out_pre: Vec<f64>,
    out_act: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Denoiser {
    config: DenoiserConfig,
    params: Vec<f64>,
    tensors: Vec<TensorInfo>,
    net: Net,
}

impl Denoiser {
    /// Fresh model with fan-in-scaled uniform weights drawn from `seed`.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (net, pb) = Net::build(&config);
        let params = pb.initialize(seed);
        Ok(Self {
            config,
            params,
            tensors: pb.tensors,
            net,
        })
    }

    /// Model with the given flat parameter vector, laid out as `tensors()`.
    pub fn from_params(config: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let (net, pb) = Net::build(&config);
        if params.len() != pb.len() {
            return Err(DenoiserError::ShapeMismatch {
                expected: pb.len(),
                found: params.len(),
            });
        }
        Ok(Self {
            config,
            params,
            tensors: pb.tensors,
            net,
        })
    }

    /// Names, shapes and offsets of every learned tensor, in storage order.
    pub fn layout(config: &DenoiserConfig) -> Result<Vec<TensorInfo>> {
        config.validate()?;
        Ok(Net::build(config).1.tensors)
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Sinusoidal code of `t` followed by an affine layer and a rectifier.
    pub fn embed_timestep(&self, t: usize) -> Vec<f64> {
        let code = sinusoidal_embedding(t as f64, self.config.time_embed_dim);
        relu(&self.net.time.forward(&self.params, &code))
    }

    /// Two affine layers with a rectifier between them, or the learned null
    /// embedding for kind `none`.
    pub fn embed_condition(&self, spec: &ConditioningSpec) -> Result<Vec<f64>> {
        Ok(match spec.value()? {
            None => self.null_embedding().to_vec(),
            Some(z) => {
                let hidden = relu(&self.net.cond1.forward(&self.params, &[z]));
                self.net.cond2.forward(&self.params, &hidden)
            }
        })
    }

    pub fn null_embedding(&self) -> &[f64] {
        &self.params[self.net.null..self.net.null + self.config.cond_embed_dim]
    }

    /// Offset of the fusion bias inside `params()`.
    pub fn fusion_bias(&self) -> &[f64] {
        let b = self.net.fuse.b;
        &self.params[b..b + self.net.fuse.output]
    }

    /// `out_i = time^T W_i cond + b_i`.
    pub fn fuse_embeddings(&self, time: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        if time.len() != self.net.fuse.in_a {
            return Err(DenoiserError::WidthMismatch {
                expected: self.net.fuse.in_a,
                found: time.len(),
            });
        }
        if cond.len() != self.net.fuse.in_b {
            return Err(DenoiserError::WidthMismatch {
                expected: self.net.fuse.in_b,
                found: cond.len(),
            });
        }
        Ok(self.net.fuse.forward(&self.params, time, cond))
    }

    /// Predicted noise for a flattened `[upper, lower]` sample.
    pub fn predict_noise(&self, y_t: &[f64], t: usize, spec: &ConditioningSpec) -> Result<Vec<f64>> {
        Ok(self.forward(y_t, t, spec.value()?)?.0)
    }

    /// Forward pass keeping the intermediates needed by `backward`.
    /// `condition` is the normalized value, `None` for the null condition.
    pub fn forward(&self, y_t: &[f64], t: usize, condition: Option<f64>) -> Result<(Vec<f64>, ForwardCache)> {
        if y_t.len() != CANONICAL_POINTS {
            return Err(DenoiserError::ShapeMismatch {
                expected: CANONICAL_POINTS,
                found: y_t.len(),
            });
        }
        if condition.is_some_and(|z| !z.is_finite()) {
            return Err(DenoiserError::NonFiniteInput);
        }
        let p = &self.params;
        let net = &self.net;
        let cfg = &self.config;

        let t_code = sinusoidal_embedding(t as f64, cfg.time_embed_dim);
        let t_pre = net.time.forward(p, &t_code);
        let temb = relu(&t_pre);
        let (cond, cemb) = match condition {
            None => (None, self.null_embedding().to_vec()),
            Some(z) => {
                let pre = net.cond1.forward(p, &[z]);
                let hidden = relu(&pre);
                let e = net.cond2.forward(p, &hidden);
                (Some((z, pre, hidden)), e)
            }
        };
        let ctx = net.fuse.forward(p, &temb, &cemb);

        let len = cfg.padded_len();
        let left = (len - SURFACE_POINTS) / 2;
        let mut input = vec![0.0; CHANNELS * len];
        for c in 0..CHANNELS {
            input[c * len + left..c * len + left + SURFACE_POINTS]
                .copy_from_slice(&y_t[c * SURFACE_POINTS..(c + 1) * SURFACE_POINTS]);
        }

        let mut h = net.input.forward(p, &input, len);
        let mut l_len = len;
        let mut encoder = Vec::with_capacity(cfg.depth);
        let mut skips = Vec::with_capacity(cfg.depth);
        for l in 0..cfg.depth {
            let (skip, cache) = net.encoder[l].forward(p, &h, l_len, &ctx);
            h = net.down[l].forward(p, &skip, l_len);
            encoder.push(cache);
            skips.push(skip);
            l_len /= 2;
        }
        let (mid, middle) = net.middle.forward(p, &h, l_len, &ctx);
        h = mid;
        let mut decoder = Vec::with_capacity(cfg.depth);
        for (i, l) in (0..cfg.depth).rev().enumerate() {
            let mut cat = upsample(&h, cfg.width(l + 1), l_len);
            l_len *= 2;
            cat.extend_from_slice(&skips[l]);
            let (out, cache) = net.decoder[i].forward(p, &cat, l_len, &ctx);
            h = out;
            decoder.push(cache);
        }
        let (out_pre, out_norm) = net.out_norm.forward(p, &h, len);
        let out_act = silu(&out_pre);
        let full = net.out_conv.forward(p, &out_act, len);
        let mut out = Vec::with_capacity(CANONICAL_POINTS);
        for c in 0..CHANNELS {
            out.extend_from_slice(&full[c * len + left..c * len + left + SURFACE_POINTS]);
        }
        let cache = ForwardCache {
            t_code,
            t_pre,
            temb,
            cond,
            cemb,
            ctx,
            input,
            encoder,
            skips,
            middle,
            decoder,
            out_norm,
            out_pre,
            out_act,
        };
        Ok((out, cache))
    }

    /// Accumulates the gradient of a scalar loss into `grads`, given the
    /// loss gradient `d_out` with respect to the forward output.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut [f64]) -> Result<()> {
        if d_out.len() != CANONICAL_POINTS {
            return Err(DenoiserError::ShapeMismatch {
                expected: CANONICAL_POINTS,
                found: d_out.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(DenoiserError::ShapeMismatch {
                expected: self.params.len(),
                found: grads.len(),
            });
        }
        let p = &self.params;
        let net = &self.net;
        let cfg = &self.config;
        let g = grads;
        let len = cfg.padded_len();
        let left = (len - SURFACE_POINTS) / 2;

        let mut d_full = vec![0.0; CHANNELS * len];
        for c in 0..CHANNELS {
            d_full[c * len + left..c * len + left + SURFACE_POINTS]
                .copy_from_slice(&d_out[c * SURFACE_POINTS..(c + 1) * SURFACE_POINTS]);
        }
        let d_act = net.out_conv.backward(p, &cache.out_act, len, &d_full, g);
        let d_pre = silu_backward(&cache.out_pre, &d_act);
        let mut dh = net.out_norm.backward(p, &cache.out_norm, len, &d_pre, g);

        let mut dctx = vec![0.0; cache.ctx.len()];
        let mut dskips: Vec<Vec<f64>> = vec![Vec::new(); cfg.depth];
        let mut l_len = len >> cfg.depth;
        // Decoder blocks run from the deepest level outwards; undo in reverse.
        for (i, l) in (0..cfg.depth).rev().enumerate().collect::<Vec<_>>().into_iter().rev() {
            let here = l_len << (cfg.depth - l);
            let dcat = net.decoder[i].backward(p, &cache.decoder[i], here, &cache.ctx, &dh, g, &mut dctx);
            let split = cfg.width(l + 1) * here;
            dskips[l] = dcat[split..].to_vec();
            dh = upsample_backward(&dcat[..split], cfg.width(l + 1), here / 2);
        }
        dh = net.middle.backward(p, &cache.middle, l_len, &cache.ctx, &dh, g, &mut dctx);
        for l in (0..cfg.depth).rev() {
            l_len *= 2;
            let mut ds = net.down[l].backward(p, &cache.skips[l], l_len, &dh, g);
            for (a, b) in ds.iter_mut().zip(&dskips[l]) {
                *a += b;
            }
            dh = net.encoder[l].backward(p, &cache.encoder[l], l_len, &cache.ctx, &ds, g, &mut dctx);
        }
        net.input.backward(p, &cache.input, len, &dh, g);

        let (dtemb, dcemb) = net.fuse.backward(p, &cache.temb, &cache.cemb, &dctx, g);
        let dt_pre = relu_backward(&cache.t_pre, &dtemb);
        net.time.backward(p, &cache.t_code, &dt_pre, g);
        match &cache.cond {
            None => {
                for (i, d) in dcemb.iter().enumerate() {
                    g[net.null + i] += d;
                }
            }
            Some((z, pre, hidden)) => {
                let dhidden = net.cond2.backward(p, hidden, &dcemb, g);
                let dpre = relu_backward(pre, &dhidden);
                net.cond1.backward(p, &[*z], &dpre, g);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DenoiserConfig {
        DenoiserConfig {
            base_width: 8,
            depth: 2,
            time_embed_dim: 8,
            cond_embed_dim: 6,
        }
    }

    #[test]
    fn padded_lengths() {
        let mut c = DenoiserConfig::default();
        assert_eq!(c.padded_len(), 104);
        c.depth = 2;
        assert_eq!(c.padded_len(), 100);
        c.depth = 5;
        assert_eq!(c.padded_len(), 128);
    }

    #[test]
    fn sinusoid_at_zero_alternates() {
        let code = sinusoidal_embedding(0.0, 10);
        assert_eq!(code, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        for t in [1.0, 17.0, 999.0] {
            assert!(sinusoidal_embedding(t, 64).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn condition_kind_names_round_trip() {
        for k in ConditionKind::ALL {
            assert_eq!(k.as_str().parse::<ConditionKind>().unwrap(), k);
            assert_eq!(ConditionKind::from_code(k.code()), Some(k));
        }
        assert_eq!("cd".parse::<ConditionKind>().unwrap(), ConditionKind::DragCoefficient);
        assert!("lift".parse::<ConditionKind>().is_err());
    }

    #[test]
    fn stats_use_population_spread() {
        let s = ConditioningStats::from_values(ConditionKind::MaxCamber, &[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(s.normalize(4.0), 2.0);
        assert_eq!(s.denormalize(2.0), 4.0);
        let flat = ConditioningStats::from_values(ConditionKind::MaxCamber, &[0.5, 0.5]);
        assert_eq!(flat.std, 1.0);
    }

    #[test]
    fn invalid_inputs() {
        let m = Denoiser::new(small(), 0).unwrap();
        assert!(matches!(
            m.predict_noise(&[0.0; 150], 1, &ConditioningSpec::none()),
            Err(DenoiserError::ShapeMismatch { .. })
        ));
        let bad = ConditioningSpec::new(ConditionKind::MaxCamber, 0.0, f64::NAN);
        assert_eq!(m.embed_condition(&bad), Err(DenoiserError::NonFiniteInput));
        assert!(m.fuse_embeddings(&[0.0; 3], &[0.0; 6]).is_err());
        assert!(Denoiser::new(DenoiserConfig { depth: 0, ..small() }, 0).is_err());
        assert!(Denoiser::new(DenoiserConfig { time_embed_dim: 7, ..small() }, 0).is_err());
        assert!(Denoiser::from_params(small(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn layout_names_are_unique() {
        let t = Denoiser::layout(&DenoiserConfig::default()).unwrap();
        let mut names: Vec<_> = t.iter().map(|i| i.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), t.len());
        let total: usize = t.iter().map(|i| i.len()).sum();
        assert_eq!(total, Denoiser::new(DenoiserConfig::default(), 1).unwrap().parameter_count());
    }
}
