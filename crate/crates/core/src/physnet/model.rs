use std::collections::BTreeMap;

use physnet_autograd::{ConvGeometry, Graph, Tensor, Var};

use super::config::{LatentKind, NetworkConfig};
use super::weights::{ModelWeights, ParamGroup};
use crate::error::{Error, Result};

/// Log-variance bounds; keeps `σ` finite and positive.
pub const LOG_VAR_MIN: f64 = -30.0;
pub const LOG_VAR_MAX: f64 = 20.0;

fn geometry() -> ConvGeometry {
    ConvGeometry::new(4, 2, 1)
}

/// Weights placed on a graph as leaves.
pub struct Bound<'g> {
    pub config: NetworkConfig,
    params: BTreeMap<String, Var<'g>>,
}

/// Encoder output for a batch.
pub struct Encoded<'g> {
    /// `[b, latent]`; the code itself for deterministic encoders.
    pub mu: Var<'g>,
    /// `[b, latent]`, clamped; absent for deterministic encoders.
    pub log_var: Option<Var<'g>>,
    /// The input grid followed by the post-activation output of every conv
    /// level, shallowest first.
    pub skips: Vec<Var<'g>>,
}

impl<'g> Bound<'g> {
    pub fn new(graph: &'g Graph, weights: &ModelWeights) -> Self {
        let params = weights.tensors.iter().map(|(k, t)| (k.clone(), graph.leaf(t.clone()))).collect();
        Self {
            config: weights.config.clone(),
            params,
        }
    }

    fn p(&self, name: &str) -> Var<'g> {
        *self.params.get(name).unwrap_or_else(|| panic!("weights lack '{name}'"))
    }

    /// Parameters of one optimizer group, in name order.
    pub fn group(&self, group: ParamGroup) -> Vec<(&str, Var<'g>)> {
        self.params
            .iter()
            .filter(|(k, _)| ParamGroup::of(k) == group)
            .map(|(k, v)| (k.as_str(), *v))
            .collect()
    }

    fn dense(&self, x: Var<'g>, prefix: &str) -> Var<'g> {
        x.matmul(self.p(&format!("{prefix}.w"))).add_bias(self.p(&format!("{prefix}.b")))
    }

    fn conv(&self, x: Var<'g>, prefix: &str) -> Var<'g> {
        x.conv3d(self.p(&format!("{prefix}.w")), geometry()).add_bias(self.p(&format!("{prefix}.b")))
    }

    /// `x` is `[b, 1, N, N, N]`.
    pub fn encode(&self, x: Var<'g>) -> Encoded<'g> {
        let cfg = &self.config;
        let b = x.shape()[0];
        let mut h = x;
        let mut skips = Vec::with_capacity(cfg.conv_levels + 1);
        skips.push(x);
        for l in 0..cfg.conv_levels {
            let a = self.conv(h, &format!("enc.conv{l}"));
            h = if l + 1 == cfg.conv_levels { a.sigmoid() } else { a.relu() };
            skips.push(h);
        }
        let flat = self.dense(h.reshape(&[b, cfg.encoder_flat_len()]), "enc.fc").relu();
        match cfg.latent_kind {
            LatentKind::Variational => Encoded {
                mu: self.dense(flat, "enc.mu"),
                log_var: Some(self.dense(flat, "enc.logvar").clamp(LOG_VAR_MIN, LOG_VAR_MAX)),
                skips,
            },
            LatentKind::Deterministic => Encoded {
                mu: self.dense(flat, "enc.code"),
                log_var: None,
                skips,
            },
        }
    }

    /// `μ + exp(½ log σ²) ⊙ noise`.
    pub fn reparameterize(&self, enc: &Encoded<'g>, noise: Var<'g>) -> Var<'g> {
        match enc.log_var {
            Some(lv) => enc.mu + lv.scale(0.5).exp() * noise,
            None => enc.mu,
        }
    }

    /// Occupancy probabilities `[b, 1, N, N, N]` from codes `z [b, latent]`,
    /// conditions `y [b, n]` and the encoder skips.
    pub fn generate(&self, z: Var<'g>, y: Var<'g>, skips: &[Var<'g>]) -> Var<'g> {
        let cfg = &self.config;
        let b = z.shape()[0];
        let s = cfg.generator_start();
        let zy = if cfg.condition_length > 0 { z.concat_channels(y) } else { z };
        let mut h = self
            .dense(zy, "gen.fc")
            .relu()
            .reshape(&[b, cfg.generator_start_channels(), s, s, s]);
        let steps = cfg.conv_levels - 1;
        for j in 0..steps {
            let skip = skips[cfg.conv_levels - 1 - j];
            let side = h.shape()[2] * 2;
            let a = h
                .concat_channels(skip)
                .conv_transpose3d(self.p(&format!("gen.deconv{j}.w")), geometry(), [side; 3])
                .add_bias(self.p(&format!("gen.deconv{j}.b")));
            h = if j + 1 == steps { a } else { a.relu() };
        }
        let input = skips[0];
        let gate = self.p("gen.input_skip").broadcast_all(&input.shape());
        (h + gate * input).sigmoid()
    }

    /// Critic score per sample, `[b]`: the mean of the dense output vector.
    pub fn discriminate(&self, g: Var<'g>, y: Var<'g>) -> Var<'g> {
        let cfg = &self.config;
        let b = g.shape()[0];
        let with_condition = |h: Var<'g>| {
            if cfg.condition_length == 0 {
                return h;
            }
            let d = h.shape()[2];
            h.concat_channels(y.broadcast_spatial([d; 3]))
        };
        let mut h = with_condition(g);
        for l in 0..cfg.conv_levels {
            let a = self.conv(h, &format!("critic.conv{l}"));
            h = if l + 1 == cfg.conv_levels { a.sigmoid() } else { a.relu() };
            if l + 1 == cfg.critic_reinject_level() {
                h = with_condition(h);
            }
        }
        let flat_len = h.value().numel() / b;
        self.dense(h.reshape(&[b, flat_len]), "critic.fc").mean_per_sample()
    }
}

/// `[b, 1, N, N, N]` tensor from grids of one resolution.
pub fn grid_batch(grids: &[&crate::voxel::VoxelGrid]) -> Result<Tensor> {
    let first = grids.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let n = first.resolution();
    let mut data = Vec::with_capacity(grids.len() * n.pow(3));
    for g in grids {
        if g.resolution() != n {
            return Err(Error::Shape(format!("batch mixes {n}³ and {}³ grids", g.resolution())));
        }
        data.extend(g.values().iter().map(|&v| v as f64));
    }
    Ok(Tensor::new(vec![grids.len(), 1, n, n, n], data))
}

/// `[b, n]` tensor from flat condition vectors.
pub fn condition_batch(conditions: &[Vec<f64>], length: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(conditions.len() * length);
    for c in conditions {
        if c.len() != length {
            return Err(Error::Shape(format!("condition of length {}, network expects {length}", c.len())));
        }
        data.extend_from_slice(c);
    }
    Ok(Tensor::new(vec![conditions.len(), length], data))
}
