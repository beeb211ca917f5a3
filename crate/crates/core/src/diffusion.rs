//! Denoising diffusion: variance schedule, forward corruption, the reverse
//! step, classifier-free guidance, and the seeded ancestral sampler.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CanonicalSample, CANONICAL_POINTS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    InvalidRange(&'static str),
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("timestep {t} outside [1, {total}]")]
    StepOutOfRange { t: usize, total: usize },
    #[error("model was trained with schedule {model:?}, sampler uses {sampler:?}")]
    ScheduleMismatch {
        model: ScheduleParams,
        sampler: ScheduleParams,
    },
    #[error("invalid guidance: {0}")]
    InvalidGuidance(&'static str),
    #[error("{targets} conditioning targets for {count} samples")]
    TargetCountMismatch { targets: usize, count: usize },
}

pub type Result<T> = core::result::Result<T, DiffusionError>;

/// The three numbers that determine a linear schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    pub total_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            total_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

/// Precomputed `beta`, `alpha = 1 - beta` and `alpha_bar` (running product of
/// `alpha`) tables. Timesteps are 1-based: index `t - 1` holds step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear `beta` from `beta_start` to `beta_end` inclusive.
    pub fn linear(total_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if total_steps == 0 {
            return Err(DiffusionError::InvalidRange("total_steps must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(DiffusionError::InvalidRange(
                "need 0 < beta_start <= beta_end < 1",
            ));
        }
        let beta: Vec<f64> = (0..total_steps)
            .map(|i| {
                if total_steps == 1 {
                    beta_start
                } else {
                    let f = i as f64 / (total_steps - 1) as f64;
                    beta_start + f * (beta_end - beta_start)
                }
            })
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(total_steps);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self {
            params: ScheduleParams {
                total_steps,
                beta_start,
                beta_end,
            },
            beta,
            alpha,
            alpha_bar,
        })
    }

    pub fn from_params(params: &ScheduleParams) -> Result<Self> {
        Self::linear(params.total_steps, params.beta_start, params.beta_end)
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn total_steps(&self) -> usize {
        self.params.total_steps
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.total_steps() {
            return Err(DiffusionError::StepOutOfRange {
                t,
                total: self.total_steps(),
            });
        }
        Ok(())
    }

    /// `beta_t` for `t` in `[1, T]`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }
}

/// A sample partway through the chain; `step` 0 is clean data.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub y: CanonicalSample,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    /// Guidance weight `w`; 0 is unconditional, 1 purely conditional.
    pub scale: f64,
    /// Probability of training on the null condition.
    pub uncond_drop_prob: f64,
    /// Clamp the clean-sample estimate to [-1, 1] at every reverse step
    /// instead of only clamping the final output.
    pub clip_denoised: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            scale: 2.0,
            uncond_drop_prob: 0.1,
            clip_denoised: false,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(DiffusionError::InvalidGuidance("scale must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.uncond_drop_prob) {
            return Err(DiffusionError::InvalidGuidance(
                "drop probability must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

fn check_shapes(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(DiffusionError::ShapeMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Closed-form corruption `y_t = sqrt(abar_t) y0 + sqrt(1 - abar_t) eps`.
pub fn forward_sample(y0: &[f64], t: usize, noise: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    check_shapes(y0, noise)?;
    schedule.check_step(t)?;
    let ab = schedule.alpha_bar(t);
    let (s, n) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
    Ok(y0.iter().zip(noise).map(|(y, e)| s * y + n * e).collect())
}

/// One Markov step `y_t = sqrt(1 - beta_t) y_{t-1} + sqrt(beta_t) eps`.
pub fn forward_step(y_prev: &[f64], t: usize, noise: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    check_shapes(y_prev, noise)?;
    schedule.check_step(t)?;
    let b = schedule.beta(t);
    let (s, n) = (libm::sqrt(1.0 - b), libm::sqrt(b));
    Ok(y_prev.iter().zip(noise).map(|(y, e)| s * y + n * e).collect())
}

/// Ancestral step
/// `y_{t-1} = (y_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t) + sqrt(beta_t) z`,
/// with `z` ignored at `t = 1`.
pub fn reverse_step(
    y_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    fresh_noise: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_shapes(y_t, eps_hat)?;
    check_shapes(y_t, fresh_noise)?;
    schedule.check_step(t)?;
    let (a, b, ab) = (schedule.alpha(t), schedule.beta(t), schedule.alpha_bar(t));
    let inv_sqrt_a = 1.0 / libm::sqrt(a);
    let coef = b / libm::sqrt(1.0 - ab);
    let sigma = if t == 1 { 0.0 } else { libm::sqrt(b) };
    Ok(y_t
        .iter()
        .zip(eps_hat)
        .zip(fresh_noise)
        .map(|((y, e), z)| inv_sqrt_a * (y - coef * e) + sigma * z)
        .collect())
}

/// Reverse step through the clean-sample estimate
/// `x0 = (y_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`, clamped to
/// `[-bound, bound]`, then the posterior mean
/// `sqrt(abar_{t-1}) beta_t / (1 - abar_t) x0 + sqrt(alpha_t) (1 - abar_{t-1}) / (1 - abar_t) y_t`
/// plus `sqrt(beta_t) z`. Without clamping this equals [`reverse_step`].
pub fn reverse_step_clipped(
    y_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    fresh_noise: &[f64],
    schedule: &NoiseSchedule,
    bound: f64,
) -> Result<Vec<f64>> {
    check_shapes(y_t, eps_hat)?;
    check_shapes(y_t, fresh_noise)?;
    schedule.check_step(t)?;
    let (a, b, ab) = (schedule.alpha(t), schedule.beta(t), schedule.alpha_bar(t));
    let ab_prev = if t == 1 { 1.0 } else { schedule.alpha_bar(t - 1) };
    let (sqrt_ab, sqrt_1m_ab) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
    let c_x0 = libm::sqrt(ab_prev) * b / (1.0 - ab);
    let c_y = libm::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
    let sigma = if t == 1 { 0.0 } else { libm::sqrt(b) };
    Ok(y_t
        .iter()
        .zip(eps_hat)
        .zip(fresh_noise)
        .map(|((y, e), z)| {
            let x0 = ((y - sqrt_1m_ab * e) / sqrt_ab).clamp(-bound, bound);
            c_x0 * x0 + c_y * y + sigma * z
        })
        .collect())
}

/// `eps_uncond + w (eps_cond - eps_uncond)`. The endpoints `w = 0` and
/// `w = 1` return the corresponding branch unchanged.
pub fn guided_epsilon(eps_cond: &[f64], eps_uncond: &[f64], scale: f64) -> Result<Vec<f64>> {
    check_shapes(eps_cond, eps_uncond)?;
    if scale == 0.0 {
        return Ok(eps_uncond.to_vec());
    }
    if scale == 1.0 {
        return Ok(eps_cond.to_vec());
    }
    Ok(eps_cond
        .iter()
        .zip(eps_uncond)
        .map(|(c, u)| u + scale * (c - u))
        .collect())
}

/// Anything that predicts the noise in a flattened canonical sample.
pub trait NoisePredictor {
    /// The schedule the predictor was trained against.
    fn schedule_params(&self) -> ScheduleParams;

    /// `condition` is a normalized conditioning value, `None` for the null
    /// condition.
    fn predict(&self, y_t: &[f64], t: usize, condition: Option<f64>) -> Vec<f64>;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sample `index` in a run seeded with `seed`; independent of how
/// many other samples are drawn or in which order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(seed ^ mix(index))
}

pub(crate) fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws one sample from pure noise by running `reverse_step` for
/// `t = T..1`. With a target, each step combines conditional and null
/// predictions by `guided_epsilon`; scale 1 uses the conditional prediction
/// alone. The result is clamped to `[-1, 1]`.
pub fn sample_one<M: NoisePredictor + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    target: Option<f64>,
    guidance: &GuidanceConfig,
    seed: u64,
) -> Result<CanonicalSample> {
    guidance.validate()?;
    check_schedule(model, schedule)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = gaussian_vec(&mut rng, CANONICAL_POINTS);
    let zeros = alloc::vec![0.0; CANONICAL_POINTS];
    for t in (1..=schedule.total_steps()).rev() {
        let eps = match target {
            None => model.predict(&y, t, None),
            Some(_) if guidance.scale == 1.0 => model.predict(&y, t, target),
            Some(_) if guidance.scale == 0.0 => model.predict(&y, t, None),
            Some(_) => {
                let cond = model.predict(&y, t, target);
                let uncond = model.predict(&y, t, None);
                guided_epsilon(&cond, &uncond, guidance.scale)?
            }
        };
        let fresh = if t > 1 {
            gaussian_vec(&mut rng, CANONICAL_POINTS)
        } else {
            zeros.clone()
        };
        y = if guidance.clip_denoised {
            reverse_step_clipped(&y, t, &eps, &fresh, schedule, 1.0)?
        } else {
            reverse_step(&y, t, &eps, &fresh, schedule)?
        };
    }
    for v in &mut y {
        *v = v.clamp(-1.0, 1.0);
    }
    CanonicalSample::from_flat(&y).map_err(|_| DiffusionError::ShapeMismatch {
        expected: CANONICAL_POINTS,
        found: y.len(),
    })
}

/// `count` samples, sample `i` seeded with `derive_seed(seed, i)`. When
/// `targets` is given it holds one normalized conditioning value per sample.
pub fn sample<M: NoisePredictor + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    targets: Option<&[f64]>,
    guidance: &GuidanceConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<CanonicalSample>> {
    if let Some(ts) = targets {
        if ts.len() != count {
            return Err(DiffusionError::TargetCountMismatch {
                targets: ts.len(),
                count,
            });
        }
    }
    check_schedule(model, schedule)?;
    (0..count)
        .map(|i| {
            let target = targets.map(|ts| ts[i]);
            sample_one(model, schedule, target, guidance, derive_seed(seed, i as u64))
        })
        .collect()
}

fn check_schedule<M: NoisePredictor + ?Sized>(model: &M, schedule: &NoiseSchedule) -> Result<()> {
    let (m, s) = (model.schedule_params(), schedule.params());
    if m.total_steps != s.total_steps
        || m.beta_start.to_bits() != s.beta_start.to_bits()
        || m.beta_end.to_bits() != s.beta_end.to_bits()
    {
        return Err(DiffusionError::ScheduleMismatch { model: m, sampler: s });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_step_schedule() {
        let s = NoiseSchedule::linear(1, 0.1, 0.1).unwrap();
        assert_eq!(s.betas(), &[0.1]);
        assert_eq!(s.alphas(), &[0.9]);
        assert_eq!(s.alpha_bars(), &[0.9]);
    }

    #[test]
    fn constant_beta_is_geometric() {
        let s = NoiseSchedule::linear(50, 0.03, 0.03).unwrap();
        for t in 1..=50 {
            let expected = libm::pow(0.97, t as f64);
            assert!((s.alpha_bar(t) - expected).abs() <= 1e-14 * expected.max(1e-300) + 1e-16);
        }
    }

    #[test]
    fn schedule_errors() {
        assert!(NoiseSchedule::linear(0, 0.1, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.3, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
        let s = NoiseSchedule::linear(10, 0.1, 0.2).unwrap();
        assert!(s.check_step(0).is_err());
        assert!(s.check_step(11).is_err());
        assert!(s.check_step(10).is_ok());
    }

    #[test]
    fn formula_reductions() {
        let s = NoiseSchedule::linear(20, 1e-3, 0.2).unwrap();
        let y0 = vec![0.0; 4];
        let eps = vec![0.5, -1.0, 2.0, 0.25];
        let t = 7;
        let yt = forward_sample(&y0, t, &eps, &s).unwrap();
        let k = libm::sqrt(1.0 - s.alpha_bar(t));
        for (y, e) in yt.iter().zip(&eps) {
            assert_eq!(*y, k * e);
        }
        let y = forward_step(&y0, t, &[1.0; 4], &s).unwrap();
        assert!(y.iter().all(|v| *v == libm::sqrt(s.beta(t))));

        let z = vec![0.0; 4];
        let back = reverse_step(&eps, t, &z, &z, &s).unwrap();
        for (b, y) in back.iter().zip(&eps) {
            assert!((b - y / libm::sqrt(s.alpha(t))).abs() <= 1e-15);
        }
        assert!(matches!(
            reverse_step(&eps, t, &z[..3], &z, &s),
            Err(DiffusionError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn final_step_ignores_fresh_noise() {
        let s = NoiseSchedule::linear(5, 0.01, 0.1).unwrap();
        let y = vec![0.3, -0.2];
        let e = vec![0.1, 0.4];
        let a = reverse_step(&y, 1, &e, &[0.0, 0.0], &s).unwrap();
        let b = reverse_step(&y, 1, &e, &[5.0, -7.0], &s).unwrap();
        assert_eq!(a, b);
        let c = reverse_step(&y, 2, &e, &[5.0, -7.0], &s).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn guidance_identities() {
        let c = vec![0.1, -0.7, 3.3];
        let u = vec![0.2, 0.9, -1.1];
        assert_eq!(guided_epsilon(&c, &u, 0.0).unwrap(), u);
        assert_eq!(guided_epsilon(&c, &u, 1.0).unwrap(), c);
        let z = vec![0.0; 3];
        let two: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        assert_eq!(guided_epsilon(&c, &z, 2.0).unwrap(), two);
        assert!(guided_epsilon(&c, &u[..2], 2.0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
