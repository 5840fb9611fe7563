use serde::{Deserialize, Serialize};

use crate::dataset::fnv1a;
use crate::error::{Error, Result};

/// Reference sizes at a 64³ grid; other resolutions scale them by `N³/64³`.
const REFERENCE_RESOLUTION: f64 = 64.0;
const REFERENCE_LATENT: f64 = 800.0;
const REFERENCE_FLATTEN: f64 = 5000.0;
const REFERENCE_DENSE: f64 = 32768.0;
const REFERENCE_DETERMINISTIC_LATENT: f64 = 5000.0;
const MIN_SCALED_DIM: usize = 64;

/// How the encoder head turns features into a latent vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    /// Mean and log-variance heads, sampled by reparameterization.
    Variational,
    /// A single head used as the code directly, with no prior term.
    Deterministic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub resolution: usize,
    pub conv_levels: usize,
    /// Channels of the first conv level; each deeper level doubles them.
    pub base_channels: usize,
    pub latent_dim: usize,
    /// Width of the dense layer between the conv ladder and the latent heads.
    pub flatten_dim: usize,
    /// Units of the generator's first dense layer, reshaped into its starting volume.
    pub generator_dense: usize,
    /// Length of the critic's output vector.
    pub critic_dense: usize,
    pub latent_kind: LatentKind,
    /// Weight on occupied voxels in the reconstruction loss.
    pub alpha: f64,
    /// Balance between the VAE and adversarial terms of the generator loss.
    pub beta: f64,
    pub lambda_gp: f64,
    pub condition_length: usize,
}

fn scaled(reference: f64, resolution: usize) -> usize {
    let r = (resolution as f64 / REFERENCE_RESOLUTION).powi(3);
    ((reference * r).round() as usize).max(1)
}

impl NetworkConfig {
    /// Default network for an `N³` grid: `log2(N) - 1` levels and dense sizes
    /// scaled from the 64³ reference.
    pub fn for_resolution(resolution: usize, condition_length: usize) -> Result<Self> {
        if resolution < 8 || !resolution.is_power_of_two() {
            return Err(Error::Config(format!("resolution {resolution} must be a power of two ≥ 8")));
        }
        let levels = resolution.trailing_zeros() as usize - 1;
        let cfg = Self {
            resolution,
            conv_levels: levels,
            base_channels: 8,
            latent_dim: scaled(REFERENCE_LATENT, resolution).max(MIN_SCALED_DIM),
            flatten_dim: scaled(REFERENCE_FLATTEN, resolution).max(MIN_SCALED_DIM),
            generator_dense: scaled(REFERENCE_DENSE, resolution),
            critic_dense: scaled(REFERENCE_DENSE, resolution),
            latent_kind: LatentKind::Variational,
            alpha: 0.85,
            beta: 0.9,
            lambda_gp: 10.0,
            condition_length,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The adversarial-autoencoder baseline: deterministic code of width
    /// 5000 at 64³, scaled like the other dense sizes.
    pub fn deterministic_baseline(resolution: usize, condition_length: usize) -> Result<Self> {
        Ok(Self::for_resolution(resolution, condition_length)?.baseline_variant())
    }

    /// This network with the baseline's deterministic code in place of the
    /// variational head.
    pub fn baseline_variant(&self) -> Self {
        Self {
            latent_kind: LatentKind::Deterministic,
            latent_dim: scaled(REFERENCE_DETERMINISTIC_LATENT, self.resolution).max(MIN_SCALED_DIM),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.resolution < 2 || !self.resolution.is_power_of_two() {
            return fail(format!("resolution {} must be a power of two", self.resolution));
        }
        if self.conv_levels < 2 || self.resolution >> self.conv_levels == 0 {
            return fail(format!("{} conv levels do not fit a {}³ grid", self.conv_levels, self.resolution));
        }
        for (name, v) in [
            ("base_channels", self.base_channels),
            ("latent_dim", self.latent_dim),
            ("flatten_dim", self.flatten_dim),
            ("generator_dense", self.generator_dense),
            ("critic_dense", self.critic_dense),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        let start = self.generator_start();
        if self.generator_dense % start.pow(3) != 0 {
            return fail(format!(
                "generator_dense {} is not a multiple of its {start}³ starting volume",
                self.generator_dense
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.beta > 0.0 && self.beta < 1.0) {
            return fail(format!("alpha {} and beta {} must lie in (0, 1)", self.alpha, self.beta));
        }
        if !(self.lambda_gp >= 0.0 && self.lambda_gp.is_finite()) {
            return fail(format!("lambda_gp {} must be non-negative", self.lambda_gp));
        }
        Ok(())
    }

    /// Channels produced by encoder level `level`.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Side length of encoder level `level`'s output.
    pub fn level_resolution(&self, level: usize) -> usize {
        self.resolution >> (level + 1)
    }

    /// Side length of the generator's first volume: the second-deepest encoder level.
    pub fn generator_start(&self) -> usize {
        self.resolution >> (self.conv_levels - 1)
    }

    pub fn generator_start_channels(&self) -> usize {
        self.generator_dense / self.generator_start().pow(3)
    }

    /// Length of the flattened deepest encoder feature.
    pub fn encoder_flat_len(&self) -> usize {
        self.channels(self.conv_levels - 1) * self.level_resolution(self.conv_levels - 1).pow(3)
    }

    /// Level after which the critic sees the condition a second time.
    pub fn critic_reinject_level(&self) -> usize {
        self.conv_levels.min(2)
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a(serde_json::to_vec(self).expect("config serializes"))
    }
}
