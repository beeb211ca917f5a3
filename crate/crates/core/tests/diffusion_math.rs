use std::cell::Cell;

use foildiff_core::diffusion::{
    forward_sample, forward_step, guided_epsilon, reverse_step, reverse_step_clipped, sample,
    sample_one,
    DiffusionError, GuidanceConfig, NoisePredictor, NoiseSchedule, ScheduleParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const TRIALS: usize = 10_000;

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Per-coordinate sample mean and unbiased variance.
fn moments(draws: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = draws.len() as f64;
    let d = draws[0].len();
    let mut mean = vec![0.0; d];
    for v in draws {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; d];
    for v in draws {
        for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m) / (n - 1.0);
        }
    }
    (mean, var)
}

/// Asserts Gaussian moments within three standard errors, coordinate-wise.
fn assert_gaussian_moments(draws: &[Vec<f64>], mean: &[f64], var: f64) {
    let n = draws.len() as f64;
    let (m, v) = moments(draws);
    let se_mean = (var / n).sqrt();
    let se_var = var * (2.0 / (n - 1.0)).sqrt();
    for k in 0..mean.len() {
        assert!(
            (m[k] - mean[k]).abs() <= 3.0 * se_mean,
            "coordinate {k}: mean {} vs {}",
            m[k],
            mean[k]
        );
        assert!(
            (v[k] - var).abs() <= 3.0 * se_var,
            "coordinate {k}: variance {} vs {var}",
            v[k]
        );
    }
}

fn default_schedule() -> NoiseSchedule {
    NoiseSchedule::from_params(&ScheduleParams::default()).unwrap()
}

#[test]
fn alpha_bar_recurrence_and_terminal_value() {
    let s = default_schedule();
    assert_eq!(s.total_steps(), 1000);
    for t in 1..=1000 {
        assert_eq!(s.alpha(t), 1.0 - s.beta(t));
        assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
        if t > 1 {
            assert!((s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() <= 1e-12);
            assert!((s.alpha_bar(t) / s.alpha_bar(t - 1) - s.alpha(t)).abs() <= 1e-12);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
    }
    assert_eq!(s.beta(1), 1e-4);
    assert!((s.beta(1000) - 0.02).abs() <= 1e-15);
    // Independent evaluation of the product through logarithms.
    let log_product: f64 = (0..1000)
        .map(|i| (1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0)).ln())
        .sum();
    let direct = log_product.exp();
    assert!(direct < 1e-4);
    assert!((s.alpha_bar(1000) - direct).abs() <= 1e-12 * direct.max(1.0));
    assert!(s.alpha_bar(1000) < 1e-4);
}

#[test]
fn forward_marginal_matches_closed_form_moments() {
    let s = default_schedule();
    let y0 = [0.12, -0.05, 0.3, 0.0, -0.2, 0.07, 0.9, -0.9];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for t in [1, 10, 250, 1000] {
        let draws: Vec<Vec<f64>> = (0..TRIALS)
            .map(|_| forward_sample(&y0, t, &normals(&mut rng, y0.len()), &s).unwrap())
            .collect();
        let ab = s.alpha_bar(t);
        let mean: Vec<f64> = y0.iter().map(|y| ab.sqrt() * y).collect();
        assert_gaussian_moments(&draws, &mean, 1.0 - ab);
    }
}

#[test]
fn stepwise_chain_matches_closed_form_moments() {
    let s = default_schedule();
    let y0 = [0.25, -0.4, 0.05, 0.6];
    let t = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws: Vec<Vec<f64>> = (0..TRIALS)
        .map(|_| {
            let mut y = y0.to_vec();
            for step in 1..=t {
                y = forward_step(&y, step, &normals(&mut rng, y.len()), &s).unwrap();
            }
            y
        })
        .collect();
    let ab = s.alpha_bar(t);
    let mean: Vec<f64> = y0.iter().map(|y| ab.sqrt() * y).collect();
    assert_gaussian_moments(&draws, &mean, 1.0 - ab);
}

#[test]
fn full_chain_variance_approaches_one() {
    let s = default_schedule();
    let y0 = [0.5, -0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let draws: Vec<Vec<f64>> = (0..TRIALS)
        .map(|_| {
            let mut y = y0.to_vec();
            for step in 1..=s.total_steps() {
                y = forward_step(&y, step, &normals(&mut rng, 2), &s).unwrap();
            }
            y
        })
        .collect();
    let ab = s.alpha_bar(1000);
    let mean: Vec<f64> = y0.iter().map(|y| ab.sqrt() * y).collect();
    assert_gaussian_moments(&draws, &mean, 1.0 - ab);
}

#[test]
fn single_step_inversion_recovers_clean_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for beta in [1e-4, 0.02, 0.3, 0.9] {
        let s = NoiseSchedule::linear(1, beta, beta).unwrap();
        let y0: Vec<f64> = normals(&mut rng, 200).iter().map(|v| 0.2 * v).collect();
        let eps = normals(&mut rng, 200);
        let yt = forward_sample(&y0, 1, &eps, &s).unwrap();
        let back = reverse_step(&yt, 1, &eps, &vec![0.0; 200], &s).unwrap();
        for (a, b) in back.iter().zip(&y0) {
            assert!((a - b).abs() <= 1e-10, "beta {beta}: {a} vs {b}");
        }
    }
}

#[test]
fn clipped_step_equals_plain_step_inside_the_bound() {
    let s = default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for t in [1, 2, 37, 500, 1000] {
        let y = normals(&mut rng, 200);
        let eps = normals(&mut rng, 200);
        let z = normals(&mut rng, 200);
        let plain = reverse_step(&y, t, &eps, &z, &s).unwrap();
        let clipped = reverse_step_clipped(&y, t, &eps, &z, &s, f64::INFINITY).unwrap();
        for (a, b) in plain.iter().zip(&clipped) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "t {t}: {a} vs {b}");
        }
    }
}

#[test]
fn clipped_step_bounds_the_clean_estimate() {
    let s = default_schedule();
    let t = 800;
    let y = vec![5.0; 4];
    let eps = vec![0.0; 4];
    let z = vec![0.0; 4];
    let out = reverse_step_clipped(&y, t, &eps, &z, &s, 1.0).unwrap();
    // x0 = 5 / sqrt(abar) is clamped to 1.
    let ab = s.alpha_bar(t);
    let ab_prev = s.alpha_bar(t - 1);
    let expected = ab_prev.sqrt() * s.beta(t) / (1.0 - ab)
        + s.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab) * 5.0;
    for v in out {
        assert!((v - expected).abs() <= 1e-12);
    }
    // At t = 1 the output is the clamped estimate itself.
    let first = reverse_step_clipped(&[3.0, -3.0, 0.5], 1, &[0.0; 3], &[0.0; 3], &s, 1.0).unwrap();
    let expect_half = 0.5 / s.alpha_bar(1).sqrt();
    assert!((first[0] - 1.0).abs() <= 1e-12 && (first[1] + 1.0).abs() <= 1e-12);
    assert!((first[2] - expect_half).abs() <= 1e-12);
}

#[test]
fn clipped_sampling_is_seeded_and_bounded() {
    let params = ScheduleParams {
        total_steps: 30,
        beta_start: 1e-3,
        beta_end: 0.2,
    };
    let s = NoiseSchedule::from_params(&params).unwrap();
    let m = linear_model(params);
    let g = GuidanceConfig {
        clip_denoised: true,
        ..GuidanceConfig::default()
    };
    let a = sample(&m, &s, None, &g, 3, 2).unwrap();
    assert_eq!(a, sample(&m, &s, None, &g, 3, 2).unwrap());
    assert!(a.iter().all(|x| x.is_finite()));
}

#[test]
fn shape_errors() {
    let s = default_schedule();
    assert!(matches!(
        forward_sample(&[0.0; 3], 1, &[0.0; 2], &s),
        Err(DiffusionError::ShapeMismatch { expected: 3, found: 2 })
    ));
    assert!(forward_step(&[0.0; 3], 1, &[0.0; 4], &s).is_err());
    assert!(matches!(
        forward_sample(&[0.0; 3], 1001, &[0.0; 3], &s),
        Err(DiffusionError::StepOutOfRange { .. })
    ));
}

/// Noise predictor with a fixed linear response that counts its calls.
struct Linear {
    params: ScheduleParams,
    calls: Cell<usize>,
}

impl NoisePredictor for Linear {
    fn schedule_params(&self) -> ScheduleParams {
        self.params
    }

    fn predict(&self, y: &[f64], t: usize, condition: Option<f64>) -> Vec<f64> {
        self.calls.set(self.calls.get() + 1);
        let shift = condition.unwrap_or(0.0);
        y.iter()
            .enumerate()
            .map(|(i, v)| 0.9 * v + 0.01 * (i as f64).sin() + shift * 1e-3 * t as f64)
            .collect()
    }
}

fn linear_model(params: ScheduleParams) -> Linear {
    Linear {
        params,
        calls: Cell::new(0),
    }
}

#[test]
fn sampling_is_seeded_finite_and_clamped() {
    let params = ScheduleParams {
        total_steps: 50,
        beta_start: 1e-3,
        beta_end: 0.2,
    };
    let s = NoiseSchedule::from_params(&params).unwrap();
    let m = linear_model(params);
    let g = GuidanceConfig::default();
    let a = sample(&m, &s, None, &g, 5, 6).unwrap();
    let b = sample(&m, &s, None, &g, 5, 6).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    assert_ne!(a[0], a[1]);
    for x in &a {
        assert!(x.is_finite());
        assert!(x.upper.iter().chain(&x.lower).all(|v| (-1.0..=1.0).contains(v)));
    }
    // Sample i depends only on (seed, i).
    let c = sample(&m, &s, None, &g, 5, 3).unwrap();
    assert_eq!(&a[..3], &c[..]);
}

#[test]
fn guided_sampling_uses_two_evaluations_per_step() {
    let params = ScheduleParams {
        total_steps: 20,
        beta_start: 1e-3,
        beta_end: 0.1,
    };
    let s = NoiseSchedule::from_params(&params).unwrap();
    let m = linear_model(params);
    let guided = GuidanceConfig {
        scale: 2.0,
        uncond_drop_prob: 0.1,
        clip_denoised: false,
    };
    sample_one(&m, &s, Some(0.3), &guided, 1).unwrap();
    assert_eq!(m.calls.replace(0), 40);
    let plain = GuidanceConfig {
        scale: 1.0,
        ..guided
    };
    sample_one(&m, &s, Some(0.3), &plain, 1).unwrap();
    assert_eq!(m.calls.replace(0), 20);
    sample_one(&m, &s, None, &guided, 1).unwrap();
    assert_eq!(m.calls.replace(0), 20);

    let targets = [-1.0, 0.0, 1.0];
    let out = sample(&m, &s, Some(&targets), &guided, 9, 3).unwrap();
    assert_eq!(out.len(), 3);
    assert!(matches!(
        sample(&m, &s, Some(&targets), &guided, 9, 2),
        Err(DiffusionError::TargetCountMismatch { targets: 3, count: 2 })
    ));
}

#[test]
fn schedule_mismatch_is_rejected() {
    let m = linear_model(ScheduleParams::default());
    let s = NoiseSchedule::linear(999, 1e-4, 0.02).unwrap();
    assert!(matches!(
        sample(&m, &s, None, &GuidanceConfig::default(), 0, 1),
        Err(DiffusionError::ScheduleMismatch { .. })
    ));
}

proptest! {
    #[test]
    fn guidance_endpoints_are_bit_exact(
        c in prop::collection::vec(-1e3f64..1e3, 1..64),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = normals(&mut rng, c.len());
        prop_assert_eq!(guided_epsilon(&c, &u, 0.0).unwrap(), u.clone());
        prop_assert_eq!(guided_epsilon(&c, &u, 1.0).unwrap(), c.clone());
    }

    #[test]
    fn schedule_recurrence_holds(
        steps in 1usize..2000,
        start in 1e-6f64..0.1,
        span in 0.0f64..0.5,
    ) {
        let s = NoiseSchedule::linear(steps, start, start + span).unwrap();
        for t in 2..=steps {
            prop_assert!((s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs() <= 1e-12);
            prop_assert_eq!(s.alpha(t), 1.0 - s.beta(t));
        }
    }
}

