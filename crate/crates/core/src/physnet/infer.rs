use physnet_autograd::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::LatentKind;
use super::model::{condition_batch, grid_batch, Bound};
use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

/// Diagonal Gaussian code of one sample. Deterministic encoders report a
/// zero-width distribution (`σ = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub mu: Vec<f64>,
    /// `ln σ²`; empty for deterministic encoders.
    pub log_var: Vec<f64>,
}

impl LatentCode {
    pub fn sigma(&self) -> Vec<f64> {
        if self.log_var.is_empty() {
            return vec![0.0; self.mu.len()];
        }
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }
}

/// Encoder output for one grid.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub code: LatentCode,
    /// The input followed by every conv level's features, each `[1, c, d, d, d]`.
    pub skips: Vec<Tensor>,
}

/// How `predict` turns a code into a latent vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// `z = μ`.
    Deterministic,
    /// `z = μ + σ ⊙ ε` with `ε` drawn from a generator seeded by the value.
    Stochastic(u64),
}

fn check_grid(weights: &ModelWeights, g: &VoxelGrid) -> Result<()> {
    if g.resolution() != weights.config.resolution {
        return Err(Error::Shape(format!(
            "{}³ grid given to a {}³ network",
            g.resolution(),
            weights.config.resolution
        )));
    }
    Ok(())
}

fn check_condition(weights: &ModelWeights, y: &[f64]) -> Result<()> {
    if y.len() != weights.config.condition_length {
        return Err(Error::Shape(format!(
            "condition of length {}, network expects {}",
            y.len(),
            weights.config.condition_length
        )));
    }
    Ok(())
}

pub fn encode(weights: &ModelWeights, x: &VoxelGrid) -> Result<EncoderOutput> {
    check_grid(weights, x)?;
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let enc = net.encode(g.constant(grid_batch(&[x])?));
    Ok(EncoderOutput {
        code: LatentCode {
            mu: enc.mu.value().data().to_vec(),
            log_var: enc.log_var.map(|lv| lv.value().data().to_vec()).unwrap_or_default(),
        },
        skips: enc.skips.iter().map(|s| (*s.value()).clone()).collect(),
    })
}

/// `μ + σ ⊙ noise`.
pub fn reparameterize(code: &LatentCode, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != code.mu.len() {
        return Err(Error::Shape(format!("{} noise values for a {}-dim code", noise.len(), code.mu.len())));
    }
    Ok(code.mu.iter().zip(code.sigma()).zip(noise).map(|((m, s), e)| m + s * e).collect())
}

/// Occupancy probabilities for latent `z`, condition `y` and encoder skips,
/// on a grid of unit spacing.
pub fn generate(weights: &ModelWeights, z: &[f64], y: &[f64], skips: &[Tensor]) -> Result<VoxelGrid> {
    let cfg = &weights.config;
    if z.len() != cfg.latent_dim {
        return Err(Error::Shape(format!("latent of length {}, network expects {}", z.len(), cfg.latent_dim)));
    }
    check_condition(weights, y)?;
    if skips.len() != cfg.conv_levels + 1 {
        return Err(Error::Shape(format!("{} skip tensors, expected {}", skips.len(), cfg.conv_levels + 1)));
    }
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let zv = g.constant(Tensor::new(vec![1, z.len()], z.to_vec()));
    let yv = g.constant(condition_batch(&[y.to_vec()], cfg.condition_length)?);
    let sv: Vec<_> = skips.iter().map(|t| g.constant(t.clone())).collect();
    let out = net.generate(zv, yv, &sv);
    VoxelGrid::from_probabilities(cfg.resolution, 1.0, out.value().data().iter().copied())
}

/// Critic score of grid `g` under condition `y`.
pub fn discriminate(weights: &ModelWeights, grid: &VoxelGrid, y: &[f64]) -> Result<f64> {
    check_grid(weights, grid)?;
    check_condition(weights, y)?;
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let x = g.constant(grid_batch(&[grid])?);
    let yv = g.constant(condition_batch(&[y.to_vec()], weights.config.condition_length)?);
    Ok(net.discriminate(x, yv).item())
}

/// Encodes, samples and decodes a batch. The outputs keep each input's spacing.
pub fn predict_batch(weights: &ModelWeights, inputs: &[&VoxelGrid], conditions: &[Vec<f64>], sampling: Sampling) -> Result<Vec<VoxelGrid>> {
    let cfg = &weights.config;
    if inputs.len() != conditions.len() {
        return Err(Error::Shape(format!("{} inputs but {} conditions", inputs.len(), conditions.len())));
    }
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    for x in inputs {
        check_grid(weights, x)?;
    }
    let g = Graph::new();
    let net = Bound::new(&g, weights);
    let x = g.constant(grid_batch(inputs)?);
    let y = g.constant(condition_batch(conditions, cfg.condition_length)?);
    let enc = net.encode(x);
    let z = match (sampling, cfg.latent_kind) {
        (Sampling::Stochastic(seed), LatentKind::Variational) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Tensor::from_fn(&enc.mu.shape(), |_| StandardNormal.sample(&mut rng));
            net.reparameterize(&enc, g.constant(noise))
        }
        _ => enc.mu,
    };
    let out = net.generate(z, y, &enc.skips).value();
    let per = cfg.resolution.pow(3);
    out.data()
        .chunks(per)
        .zip(inputs)
        .map(|(c, x)| VoxelGrid::from_probabilities(cfg.resolution, x.spacing(), c.iter().copied()))
        .collect()
}

pub fn predict(weights: &ModelWeights, x: &VoxelGrid, y: &[f64], sampling: Sampling) -> Result<VoxelGrid> {
    check_condition(weights, y)?;
    Ok(predict_batch(weights, &[x], &[y.to_vec()], sampling)?.remove(0))
}
