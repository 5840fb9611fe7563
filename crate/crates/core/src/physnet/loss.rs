use physnet_autograd::{Graph, Tensor, Var};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Floor on the squared gradient norm before its square root, so that an
/// all-zero gradient does not produce an infinite derivative.
const NORM_FLOOR: f64 = 1e-24;

/// Weighted binary cross-entropy `-α t ln o - (1-α)(1-t) ln(1-o)`, averaged
/// over every voxel of the batch.
pub fn reconstruction_loss<'g>(target: Var<'g>, output: Var<'g>, alpha: f64) -> Var<'g> {
    let o = output.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let pos = target * o.ln();
    let neg = target.scale(-1.0).add_scalar(1.0) * o.scale(-1.0).add_scalar(1.0).ln();
    (pos.scale(-alpha) + neg.scale(alpha - 1.0)).mean_all()
}

/// KL divergence of `N(μ, σ²)` from the standard normal, summed over latent
/// dimensions and averaged over the batch.
pub fn prior_loss<'g>(mu: Var<'g>, log_var: Var<'g>) -> Var<'g> {
    let b = mu.shape()[0] as f64;
    let inner = log_var.add_scalar(1.0) - mu.square() - log_var.exp();
    inner.sum_all().scale(-0.5 / b)
}

/// `β (reconstruction + prior) - (1 - β) D`, where `critic_mean` is the batch
/// mean critic score of the generated grids.
pub fn generator_loss<'g>(vae: Var<'g>, critic_mean: Var<'g>, beta: f64) -> Var<'g> {
    vae.scale(beta) - critic_mean.scale(1.0 - beta)
}

/// Terms of the gradient-penalty critic loss.
pub struct CriticLoss<'g> {
    pub total: Var<'g>,
    /// `mean D(fake) - mean D(real)`.
    pub wasserstein: Var<'g>,
    /// `λ · mean (‖∇D(interp)‖ - 1)²`.
    pub penalty: Var<'g>,
}

/// Per-sample interpolation `η t + (1 - η) o`.
pub fn interpolate(fake: &Tensor, real: &Tensor, eta: &[f64]) -> Tensor {
    assert_eq!(fake.shape(), real.shape());
    let b = fake.shape()[0];
    assert_eq!(eta.len(), b, "one interpolation weight per sample");
    let inner = fake.numel() / b;
    Tensor::from_fn(fake.shape(), |i| {
        let e = eta[i / inner];
        e * real.data()[i] + (1.0 - e) * fake.data()[i]
    })
}

/// Wasserstein critic loss with a gradient penalty on interpolates of
/// `fake` and `real`. `critic` maps a `[b, ...]` batch to per-sample scores `[b]`.
pub fn critic_loss<'g>(
    graph: &'g Graph,
    critic: &dyn Fn(Var<'g>) -> Var<'g>,
    fake: Var<'g>,
    real: Var<'g>,
    eta: &[f64],
    lambda: f64,
) -> CriticLoss<'g> {
    let wasserstein = critic(fake).mean_all() - critic(real).mean_all();
    let interp = graph.leaf(interpolate(&fake.value(), &real.value(), eta));
    let score = critic(interp).sum_all();
    let grad = graph.grad(score, &[interp])[0];
    let norm = grad.square().sum_per_sample().clamp(NORM_FLOOR, f64::INFINITY).sqrt();
    let penalty = norm.add_scalar(-1.0).square().mean_all().scale(lambda);
    CriticLoss {
        total: wasserstein + penalty,
        wasserstein,
        penalty,
    }
}

/// [`reconstruction_loss`] on plain values.
pub fn reconstruction_loss_value(target: &[f64], output: &[f64], alpha: f64) -> f64 {
    assert_eq!(target.len(), output.len());
    let g = Graph::new();
    let shape = vec![1, target.len()];
    let t = g.constant(Tensor::new(shape.clone(), target.to_vec()));
    let o = g.constant(Tensor::new(shape, output.to_vec()));
    reconstruction_loss(t, o, alpha).item()
}

/// [`prior_loss`] of a single code.
pub fn prior_loss_value(mu: &[f64], log_var: &[f64]) -> f64 {
    assert_eq!(mu.len(), log_var.len());
    let g = Graph::new();
    let m = g.constant(Tensor::new(vec![1, mu.len()], mu.to_vec()));
    let lv = g.constant(Tensor::new(vec![1, mu.len()], log_var.to_vec()));
    prior_loss(m, lv).item()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bce(t: f64, o: f64) -> f64 {
        -(t * o.ln() + (1.0 - t) * (1.0 - o).ln())
    }

    #[test]
    fn reconstruction_reference_values() {
        let v = reconstruction_loss_value(&[1.0], &[0.5], 0.85);
        assert!((v - 0.85 * 2f64.ln()).abs() < 1e-12);
        let perfect = reconstruction_loss_value(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], 0.85);
        assert!(perfect <= 0.85 * 1.6e-6 && perfect >= 0.0);
        let (t, o) = ([1.0, 0.0, 1.0, 0.0], [0.3, 0.2, 0.9, 0.6]);
        let plain: f64 = t.iter().zip(&o).map(|(&t, &o)| bce(t, o)).sum::<f64>() / 4.0;
        assert!((reconstruction_loss_value(&t, &o, 0.5) - 0.5 * plain).abs() < 1e-12);
    }

    #[test]
    fn prior_reference_values() {
        assert_eq!(prior_loss_value(&[0.0; 5], &[0.0; 5]), 0.0);
        assert!((prior_loss_value(&[1.0], &[0.0]) - 0.5).abs() < 1e-12);
        let v = prior_loss_value(&[0.0], &[4f64.ln()]);
        assert!((v - (-0.5 * (1.0 + 4f64.ln() - 4.0))).abs() < 1e-12);
        assert!((v - 0.8069).abs() < 1e-4);
    }

    #[test]
    fn generator_loss_boundaries() {
        let g = Graph::new();
        let vae = g.scalar(2.0);
        let d = g.scalar(0.4);
        assert!((generator_loss(vae, d, 0.5).item() - 0.8).abs() < 1e-12);
        assert_eq!(generator_loss(vae, d, 1.0).item(), 2.0);
        assert_eq!(generator_loss(vae, d, 0.0).item(), -0.4);
    }

    fn linear<'g>(w: Var<'g>) -> impl Fn(Var<'g>) -> Var<'g> {
        move |x| {
            let b = x.shape()[0];
            x.reshape(&[b, w.shape()[0]]).matmul(w).reshape(&[b])
        }
    }

    /// A linear critic `w · x` with `‖w‖ = 1` has unit input gradient
    /// everywhere, so its penalty vanishes exactly.
    #[test]
    fn unit_norm_linear_critic_has_no_penalty() {
        let g = Graph::new();
        let n = 8;
        let w = g.constant(Tensor::from_fn(&[n, 1], |i| if i < 4 { 0.5 } else { 0.0 }));
        let critic = linear(w);
        let fake = g.constant(Tensor::from_fn(&[2, n], |i| (i as f64 * 0.3).sin().abs()));
        let real = g.constant(Tensor::from_fn(&[2, n], |i| if i % 3 == 0 { 1.0 } else { 0.0 }));
        for lambda in [10.0, 0.0] {
            let loss = critic_loss(&g, &critic, fake, real, &[0.2, 0.9], lambda);
            assert_eq!(loss.penalty.item(), 0.0);
            let plain = critic(fake).mean_all().item() - critic(real).mean_all().item();
            assert!((loss.total.item() - plain).abs() < 1e-12);
        }
        let same = critic_loss(&g, &critic, real, real, &[0.5, 0.5], 10.0);
        assert_eq!(same.wasserstein.item(), 0.0);
    }

    #[test]
    fn penalty_punishes_steep_critics() {
        let g = Graph::new();
        let w = g.constant(Tensor::full(&[4, 1], 1.0));
        let critic = linear(w);
        let x = g.constant(Tensor::zeros(&[1, 4]));
        let loss = critic_loss(&g, &critic, x, x, &[0.5], 10.0);
        // ‖∇‖ = 2, so the penalty is λ (2 - 1)².
        assert!((loss.penalty.item() - 10.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prior_is_nonnegative_and_zero_only_at_standard(
            mu in proptest::collection::vec(-3.0f64..3.0, 1..6),
            lv in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let lv = &lv[..mu.len()];
            let v = prior_loss_value(&mu, lv);
            prop_assert!(v >= 0.0);
            let off = mu.iter().chain(lv).any(|x| x.abs() > 1e-3);
            if off {
                prop_assert!(v > 0.0);
            }
        }

        #[test]
        fn reconstruction_is_monotone(o1 in 0.0f64..1.0, o2 in 0.0f64..1.0, alpha in 0.05f64..0.95) {
            prop_assume!((o1 - o2).abs() > 1e-6);
            let (lo, hi) = if o1 < o2 { (o1, o2) } else { (o2, o1) };
            let hi = hi.min(1.0 - 1e-6).max(lo + 1e-7);
            let lo = lo.max(1e-6);
            prop_assume!(hi > lo);
            let on = |o| reconstruction_loss_value(&[1.0], &[o], alpha);
            let off = |o| reconstruction_loss_value(&[0.0], &[o], alpha);
            prop_assert!(on(lo) > on(hi));
            prop_assert!(off(lo) < off(hi));
            prop_assert!(on(lo) >= 0.0 && off(hi) >= 0.0);
        }
    }
}
