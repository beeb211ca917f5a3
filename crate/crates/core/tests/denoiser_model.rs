use foildiff_core::denoiser::{
    sinusoidal_embedding, ConditionKind, ConditioningSpec, ConditioningStats, Denoiser,
    DenoiserConfig,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> DenoiserConfig {
    DenoiserConfig {
        base_width: 8,
        depth: 3,
        time_embed_dim: 16,
        cond_embed_dim: 16,
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
}

fn mse(model: &Denoiser, y: &[f64], t: usize, z: Option<f64>, target: &[f64]) -> f64 {
    let (out, _) = model.forward(y, t, z).unwrap();
    out.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / out.len() as f64
}

/// Relative disagreement between analytic and central-difference gradients
/// for a seeded 100-parameter subset.
fn gradient_disagreements(model: &mut Denoiser, z: Option<f64>, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = uniform(&mut rng, 200);
    let target = uniform(&mut rng, 200);
    let t = 137;

    let (out, cache) = model.forward(&y, t, z).unwrap();
    let d_out: Vec<f64> = out
        .iter()
        .zip(&target)
        .map(|(a, b)| 2.0 * (a - b) / out.len() as f64)
        .collect();
    let mut grads = vec![0.0; model.parameter_count()];
    model.backward(&cache, &d_out, &mut grads).unwrap();

    let h = 1e-5;
    sample(&mut rng, model.parameter_count(), 100)
        .into_iter()
        .map(|i| {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let up = mse(model, &y, t, z, &target);
            model.params_mut()[i] = orig - h;
            let down = mse(model, &y, t, z, &target);
            model.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[i];
            let scale = analytic.abs().max(numeric.abs());
            if scale == 0.0 {
                0.0
            } else {
                (analytic - numeric).abs() / scale
            }
        })
        .collect()
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for (z, seed) in [(Some(0.7), 1u64), (None, 2)] {
        let mut model = Denoiser::new(config(), seed).unwrap();
        let errors = gradient_disagreements(&mut model, z, seed + 10);
        let good = errors.iter().filter(|e| **e <= 1e-3).count();
        assert!(good >= 99, "only {good}/100 within 1e-3: {errors:?}");
    }
}

#[test]
fn output_shape_and_determinism() {
    let model = Denoiser::new(config(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = uniform(&mut rng, 200);
    let spec = ConditioningSpec::new(ConditionKind::DragCoefficient, 0.01, -0.4);
    for t in [0, 1, 500, 1000] {
        let a = model.predict_noise(&y, t, &spec).unwrap();
        let b = model.predict_noise(&y, t, &spec).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
        let n = model.predict_noise(&y, t, &ConditioningSpec::none()).unwrap();
        assert_ne!(a, n);
    }
    let other = Denoiser::new(config(), 3).unwrap();
    assert_eq!(model.params(), other.params());
}

#[test]
fn every_depth_preserves_shape() {
    for depth in 1..=5 {
        let model = Denoiser::new(
            DenoiserConfig {
                base_width: 4,
                depth,
                time_embed_dim: 4,
                cond_embed_dim: 3,
            },
            0,
        )
        .unwrap();
        let out = model.predict_noise(&[0.1; 200], 5, &ConditioningSpec::none()).unwrap();
        assert_eq!(out.len(), 200);
    }
}

#[test]
fn condition_embedding_behaviour() {
    let model = Denoiser::new(config(), 5).unwrap();
    let none = model.embed_condition(&ConditioningSpec::none()).unwrap();
    assert_eq!(none.as_slice(), model.null_embedding());
    let stats = ConditioningStats::from_values(ConditionKind::LiftCoefficient, &[0.1, 0.4, 0.9]);
    let a = model.embed_condition(&stats.spec(0.2)).unwrap();
    let b = model.embed_condition(&stats.spec(0.8)).unwrap();
    assert_eq!(a, model.embed_condition(&stats.spec(0.2)).unwrap());
    assert_eq!(a.len(), 16);
    assert_ne!(a, b);
}

#[test]
fn timestep_embedding_is_deterministic() {
    let model = Denoiser::new(config(), 6).unwrap();
    assert_eq!(model.embed_timestep(42), model.embed_timestep(42));
    assert_ne!(model.embed_timestep(42), model.embed_timestep(43));
    assert!(model.embed_timestep(42).iter().all(|v| *v >= 0.0));
    let code = sinusoidal_embedding(0.0, 16);
    for (i, v) in code.iter().enumerate() {
        assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
    }
}

/// Explicit double contraction over the fusion weight tensor, read from the
/// parameter buffer by name.
fn fusion_oracle(model: &Denoiser, time: &[f64], cond: &[f64]) -> Vec<f64> {
    let find = |name: &str| model.tensors().iter().find(|t| t.name == name).unwrap().clone();
    let w = find("fusion.weight");
    let b = find("fusion.bias");
    let (out, ia, ib) = (w.shape[0], w.shape[1], w.shape[2]);
    let p = model.params();
    let mut y = vec![0.0; out];
    for k in 0..out {
        let mut acc = 0.0;
        for i in 0..ia {
            for j in 0..ib {
                acc += time[i] * p[w.offset + (k * ia + i) * ib + j] * cond[j];
            }
        }
        y[k] = acc + p[b.offset + k];
    }
    y
}

#[test]
fn fusion_is_bilinear() {
    let mut model = Denoiser::new(config(), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let time = uniform(&mut rng, 16);
    let cond = uniform(&mut rng, 16);

    let zero = model.fuse_embeddings(&time, &[0.0; 16]).unwrap();
    assert_eq!(zero.as_slice(), model.fusion_bias());

    let out = model.fuse_embeddings(&time, &cond).unwrap();
    assert!(out.iter().all(|v| v.is_finite()));
    for (a, b) in out.iter().zip(fusion_oracle(&model, &time, &cond)) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    // With the bias cleared, doubling the condition doubles the output exactly.
    let bias = model.tensors().iter().find(|t| t.name == "fusion.bias").unwrap().range();
    model.params_mut()[bias].fill(0.0);
    let once = model.fuse_embeddings(&time, &cond).unwrap();
    let doubled: Vec<f64> = cond.iter().map(|v| 2.0 * v).collect();
    let twice = model.fuse_embeddings(&time, &doubled).unwrap();
    for (a, b) in once.iter().zip(&twice) {
        assert_eq!(2.0 * a, *b);
    }
}

