use physnet_autograd::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::voxel::VoxelGrid;

/// A 4³, two-level network small enough for finite differences.
fn tiny_config() -> NetworkConfig {
    NetworkConfig {
        resolution: 4,
        conv_levels: 2,
        base_channels: 2,
        latent_dim: 3,
        flatten_dim: 5,
        generator_dense: 16,
        critic_dense: 3,
        latent_kind: LatentKind::Variational,
        alpha: 0.85,
        beta: 0.7,
        lambda_gp: 10.0,
        condition_length: 2,
    }
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| StandardNormal.sample(&mut rng))
}

fn blob(n: usize, seed: u64) -> VoxelGrid {
    VoxelGrid::from_fn(n, 0.01, |x, y, z| (x * 7 + y * 3 + z * 5 + seed as usize) % 4 < 2 || z == 0).unwrap()
}

/// Generator loss of a fixed batch, with the critic folded in.
fn generator_objective<'g>(g: &'g Graph, net: &Bound<'g>, noise: &Tensor, x: &Tensor, t: &Tensor, y: &Tensor) -> physnet_autograd::Var<'g> {
    let cfg = &net.config;
    let (x, t, y) = (g.constant(x.clone()), g.constant(t.clone()), g.constant(y.clone()));
    let enc = net.encode(x);
    let z = net.reparameterize(&enc, g.constant(noise.clone()));
    let o = net.generate(z, y, &enc.skips);
    let vae = reconstruction_loss(t, o, cfg.alpha) + prior_loss(enc.mu, enc.log_var.unwrap());
    generator_loss(vae, net.discriminate(o, y).mean_all(), cfg.beta)
}

fn critic_objective<'g>(g: &'g Graph, net: &Bound<'g>, fake: &Tensor, real: &Tensor, y: &Tensor) -> physnet_autograd::Var<'g> {
    let y = g.constant(y.clone());
    let critic = |v| net.discriminate(v, y);
    critic_loss(g, &critic, g.constant(fake.clone()), g.constant(real.clone()), &[0.3, 0.8], net.config.lambda_gp).total
}

/// Largest relative error between tape gradients and central differences
/// over every parameter element of `group`.
fn max_gradient_error(
    weights: &ModelWeights,
    group: Option<ParamGroup>,
    objective: &dyn for<'g> Fn(&'g Graph, &Bound<'g>) -> physnet_autograd::Var<'g>,
) -> f64 {
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let params: Vec<_> = [ParamGroup::Generator, ParamGroup::Critic]
        .into_iter()
        .filter(|&p| group.is_none_or(|q| q == p))
        .flat_map(|p| net.group(p).into_iter().map(|(k, v)| (k.to_string(), v)))
        .collect();
    let loss = objective(&g, &net);
    let vars: Vec<_> = params.iter().map(|(_, v)| *v).collect();
    let grads = g.grad(loss, &vars);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for ((name, _), grad) in params.iter().zip(grads) {
        let analytic = grad.value();
        for i in 0..analytic.numel() {
            let eval = |delta: f64| {
                let mut w = weights.clone();
                w.tensors.get_mut(name).unwrap().data_mut()[i] += delta;
                let g = Graph::new();
                let net = Bound::new(&g, &w);
                objective(&g, &net).item()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn generator_loss_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let w = ModelWeights::init(&cfg, 11).unwrap();
    let x = grid_batch(&[&blob(4, 0), &blob(4, 1)]).unwrap();
    let t = grid_batch(&[&blob(4, 2), &blob(4, 3)]).unwrap();
    let y = Tensor::new(vec![2, 2], vec![0.2, 0.7, 0.9, 0.1]);
    let noise = random_tensor(&[2, cfg.latent_dim], 5);
    let err = max_gradient_error(&w, None, &|g, net| generator_objective(g, net, &noise, &x, &t, &y));
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn critic_loss_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let w = ModelWeights::init(&cfg, 12).unwrap();
    let fake = Tensor::from_fn(&[2, 1, 4, 4, 4], |i| 0.5 + 0.4 * (i as f64 * 0.7).sin());
    let real = grid_batch(&[&blob(4, 4), &blob(4, 5)]).unwrap();
    let y = Tensor::new(vec![2, 2], vec![0.4, 0.6, 0.0, 1.0]);
    let err = max_gradient_error(&w, Some(ParamGroup::Critic), &|g, net| critic_objective(g, net, &fake, &real, &y));
    assert!(err < 1e-4, "max relative error {err}");
}

fn desk_weights(seed: u64) -> ModelWeights {
    let mut cfg = NetworkConfig::for_resolution(16, 4).unwrap();
    cfg.base_channels = 4;
    ModelWeights::init(&cfg, seed).unwrap()
}

#[test]
fn encoder_heads_have_configured_width() {
    let w = desk_weights(1);
    let out = encode(&w, &blob(16, 0)).unwrap();
    assert_eq!((out.code.mu.len(), out.code.log_var.len()), (64, 64));
    assert!(out.code.sigma().iter().all(|s| s.is_finite() && *s > 0.0));
    assert_eq!(out.skips.len(), 4);
    assert_eq!(out.skips[1].shape(), &[1, 4, 8, 8, 8]);
    assert!(encode(&w, &blob(8, 0)).is_err());
}

#[test]
fn reparameterization_limits() {
    let code = LatentCode {
        mu: vec![0.5, -1.0],
        log_var: vec![LOG_VAR_MIN, 0.0],
    };
    assert_eq!(reparameterize(&code, &[0.0, 0.0]).unwrap(), code.mu);
    let z = reparameterize(&code, &[1.0, 2.0]).unwrap();
    assert!((z[0] - 0.5).abs() < 1e-6);
    assert_eq!(z[1], 1.0);
    assert!(reparameterize(&code, &[1.0]).is_err());

    let unit = LatentCode {
        mu: vec![0.0; 4],
        log_var: vec![0.0; 4],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sum = [0.0; 4];
    let draws = 10_000;
    for _ in 0..draws {
        let noise: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (s, v) in sum.iter_mut().zip(reparameterize(&unit, &noise).unwrap()) {
            *s += v;
        }
    }
    assert!(sum.iter().all(|s| (s / draws as f64).abs() < 0.05));
}

#[test]
fn generator_is_pure_bounded_and_condition_sensitive() {
    let w = desk_weights(2);
    let x = blob(16, 1);
    let enc = encode(&w, &x).unwrap();
    let y0 = [0.3, 0.5, 0.0, 0.5];
    let y1 = [0.3, 0.5, 1.0, 0.5];
    let a = generate(&w, &enc.code.mu, &y0, &enc.skips).unwrap();
    let b = generate(&w, &enc.code.mu, &y0, &enc.skips).unwrap();
    assert_eq!(a, b);
    assert!(a.values().iter().all(|&v| v > 0.0 && v < 1.0));
    let c = generate(&w, &enc.code.mu, &y1, &enc.skips).unwrap();
    let l1: f64 = a.values().iter().zip(c.values()).map(|(p, q)| (p - q).abs() as f64).sum();
    assert!(l1 > 0.0);
    assert!(generate(&w, &enc.code.mu[1..], &y0, &enc.skips).is_err());
    assert!(generate(&w, &enc.code.mu, &y0[1..], &enc.skips).is_err());
}

#[test]
fn critic_is_unbounded_scalar_and_zero_for_zero_weights() {
    let w = desk_weights(3);
    let g = blob(16, 2);
    let d0 = discriminate(&w, &g, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    let d1 = discriminate(&w, &g, &[0.9, 0.2, 0.3, 0.4]).unwrap();
    assert!(d0.is_finite() && d1.is_finite());
    assert_ne!(d0, d1);
    let zero = ModelWeights::zeros(&w.config).unwrap();
    assert_eq!(discriminate(&zero, &g, &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
}

#[test]
fn prediction_modes() {
    let w = desk_weights(4);
    let x = blob(16, 3);
    let y = [0.5, 0.5, 0.5, 0.0];
    let d1 = predict(&w, &x, &y, Sampling::Deterministic).unwrap();
    assert_eq!(d1, predict(&w, &x, &y, Sampling::Deterministic).unwrap());
    assert_eq!(d1.spacing(), x.spacing());
    let s1 = predict(&w, &x, &y, Sampling::Stochastic(1)).unwrap();
    assert_eq!(s1, predict(&w, &x, &y, Sampling::Stochastic(1)).unwrap());
    assert_ne!(s1, predict(&w, &x, &y, Sampling::Stochastic(2)).unwrap());
    let batch = predict_batch(&w, &[&x, &blob(16, 4)], &[y.to_vec(), y.to_vec()], Sampling::Deterministic).unwrap();
    assert_eq!(batch[0], d1);
}

#[test]
fn deterministic_latent_has_no_variance_head() {
    let mut cfg = NetworkConfig::deterministic_baseline(16, 4).unwrap();
    cfg.base_channels = 4;
    let w = ModelWeights::init(&cfg, 5).unwrap();
    let out = encode(&w, &blob(16, 0)).unwrap();
    assert_eq!(out.code.mu.len(), 78);
    assert!(out.code.log_var.is_empty());
    assert_eq!(
        predict(&w, &blob(16, 0), &[0.0; 4], Sampling::Stochastic(3)).unwrap(),
        predict(&w, &blob(16, 0), &[0.0; 4], Sampling::Deterministic).unwrap()
    );
}
